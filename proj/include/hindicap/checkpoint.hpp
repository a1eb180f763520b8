#pragma once

#include <filesystem>
#include <string>

#include "hindicap/corpus.hpp"
#include "hindicap/model.hpp"

namespace hindicap {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Checkpoint layout (all integers little-endian):
///   "HCAPCKPT" | u32 version | u64 header size | header JSON | parameter data | u32 crc32
/// The JSON header carries the model config, the vocabulary (index order) and the
/// name/rows/cols of each parameter; data is float32 in column-major order.
struct Checkpoint {
  CaptionModel<float> model;
  Vocabulary vocab;
};

std::string serialize_checkpoint(const CaptionModel<float>& model, const Vocabulary& vocab);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const CaptionModel<float>& model, const Vocabulary& vocab, const std::filesystem::path& path);
/// Throws IntegrityError for truncated/corrupt files and for version mismatches.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& json);

} // namespace hindicap
