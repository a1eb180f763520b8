#pragma once

#include <string>
#include <vector>

#include "hindicap/corpus.hpp"
#include "hindicap/model.hpp"

namespace hindicap {

enum class StopReason { kEndMarker, kMaxLength };

std::string to_string(StopReason reason);

struct DecodeResult {
  std::string text;         // markers stripped
  int token_count = 0;      // generated words, excluding both markers
  StopReason stop_reason = StopReason::kEndMarker;
};

/// Greedy decoding from `startseq`: each step appends the most probable word (lowest index on
/// ties; padding and `startseq` are never chosen) until `endseq` is chosen or the prefix holds
/// `max_len` tokens.
DecodeResult greedy_caption(const CaptionModel<float>& model, const VectorXf& feature, const Vocabulary& vocab,
                            int max_len);

/// Same as greedy_caption for many images, stepping all unfinished prefixes together.
std::vector<DecodeResult> greedy_caption_batch(const CaptionModel<float>& model, const std::vector<VectorXf>& features,
                                               const Vocabulary& vocab, int max_len);

} // namespace hindicap
