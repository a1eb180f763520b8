#include "hindicap/checkpoint.hpp"

#include "hindicap/error.hpp"
#include "hindicap/io.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>

namespace hindicap {

namespace {

constexpr char kMagic[8] = {'H', 'C', 'A', 'P', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IntegrityError("checkpoint truncated");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  return value;
}

nlohmann::json config_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)}, {"vocab_size", c.vocab_size},   {"max_len", c.max_len},
          {"feature_dim", c.feature_dim},    {"embed_dim", c.embed_dim},     {"hidden_units", c.hidden_units},
          {"dropout_rate", c.dropout_rate},  {"seed", c.seed}};
}

ModelConfig config_of(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.vocab_size = j.at("vocab_size");
  c.max_len = j.at("max_len");
  c.feature_dim = j.at("feature_dim");
  c.embed_dim = j.at("embed_dim");
  c.hidden_units = j.at("hidden_units");
  c.dropout_rate = j.at("dropout_rate");
  c.seed = j.at("seed");
  return c;
}

} // namespace

std::string config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig config_from_json(const std::string& json) { return config_of(nlohmann::json::parse(json)); }

std::string serialize_checkpoint(const CaptionModel<float>& model, const Vocabulary& vocab) {
  if (vocab.size() != model.config().vocab_size)
    throw DimensionError("vocabulary size " + std::to_string(vocab.size()) + " does not match the model's " +
                         std::to_string(model.config().vocab_size));
  nlohmann::json header;
  header["config"] = config_json(model.config());
  header["vocabulary"] = vocab.words();
  header["parameters"] = nlohmann::json::array();
  std::string data;
  model.parameters().for_each([&](const char* name, const auto& t) {
    header["parameters"].push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    for (Eigen::Index i = 0; i < t.size(); ++i) put_le(data, std::bit_cast<std::uint32_t>(t.data()[i]));
  });
  const std::string header_text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, header_text.size());
  out += header_text;
  out += data;
  put_le<std::uint32_t>(out, io::crc32(out));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw IntegrityError("not a checkpoint file (bad magic or truncated)");
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion)
    throw IntegrityError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                         std::to_string(kCheckpointVersion) + ")");
  const auto header_size = get_le<std::uint64_t>(bytes, pos);
  if (header_size > bytes.size() - pos) throw IntegrityError("checkpoint truncated in header");
  std::size_t tail = bytes.size() - 4;
  std::size_t crc_pos = tail;
  if (io::crc32(std::string_view(bytes).substr(0, tail)) != get_le<std::uint32_t>(bytes, crc_pos))
    throw IntegrityError("checkpoint checksum mismatch (corrupt or truncated)");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_size));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header unreadable: ") + e.what());
  }
  pos += header_size;
  const ModelConfig config = config_of(header.at("config"));
  Vocabulary vocab(header.at("vocabulary").get<std::vector<std::string>>());
  auto params = ModelParameters<float>::zeros(config);
  const auto& manifest = header.at("parameters");
  std::size_t index = 0;
  params.for_each([&](const char* name, auto& t) {
    if (index >= manifest.size() || manifest[index].at("name") != name ||
        manifest[index].at("rows") != t.rows() || manifest[index].at("cols") != t.cols())
      throw IntegrityError(std::string("checkpoint parameter layout mismatch at ") + name);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      if (pos + 4 > tail) throw IntegrityError("checkpoint truncated in parameter data");
      t.data()[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
    }
    ++index;
  });
  if (index != manifest.size() || pos != tail) throw IntegrityError("checkpoint has trailing or missing data");
  if (vocab.size() != config.vocab_size) throw IntegrityError("checkpoint vocabulary does not match its config");
  return {CaptionModel<float>(config, std::move(params)), std::move(vocab)};
}

void save_checkpoint(const CaptionModel<float>& model, const Vocabulary& vocab, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_checkpoint(model, vocab));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("checkpoint not found: " + path.string());
  return deserialize_checkpoint(io::read_file(path));
}

} // namespace hindicap
