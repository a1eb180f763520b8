#include "hindicap/decoding.hpp"

#include "hindicap/error.hpp"

namespace hindicap {

std::string to_string(StopReason reason) { return reason == StopReason::kEndMarker ? "endseq" : "max_len"; }

DecodeResult greedy_caption(const CaptionModel<float>& model, const VectorXf& feature, const Vocabulary& vocab,
                            int max_len) {
  return greedy_caption_batch(model, {feature}, vocab, max_len).front();
}

std::vector<DecodeResult> greedy_caption_batch(const CaptionModel<float>& model, const std::vector<VectorXf>& features,
                                               const Vocabulary& vocab, int max_len) {
  const auto& config = model.config();
  if (vocab.size() != config.vocab_size)
    throw DimensionError("vocabulary size " + std::to_string(vocab.size()) + " does not match the model's " +
                         std::to_string(config.vocab_size));
  if (max_len < 2 || max_len > config.max_len) throw ArgumentError("decode max_len must lie in [2, model max_len]");
  for (const auto& f : features)
    if (f.size() != config.feature_dim)
      throw DimensionError("feature has " + std::to_string(f.size()) + " values, model expects " +
                           std::to_string(config.feature_dim));
  const int start = vocab.start_index();
  const int end = vocab.end_index();

  std::vector<std::vector<int>> prefixes(features.size(), std::vector<int>{start});
  std::vector<DecodeResult> results(features.size());
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < features.size(); ++i) active.push_back(i);

  while (!active.empty()) {
    std::vector<std::size_t> still;
    std::vector<std::size_t> stepping;
    for (auto i : active) {
      if (static_cast<int>(prefixes[i].size()) >= max_len)
        results[i].stop_reason = StopReason::kMaxLength;
      else
        stepping.push_back(i);
    }
    if (stepping.empty()) break;
    const auto n = static_cast<Eigen::Index>(stepping.size());
    BatchInput<float> batch;
    batch.features.resize(config.feature_dim, n);
    const auto len = static_cast<Eigen::Index>(prefixes[stepping.front()].size());
    batch.tokens = TokenMatrix::Zero(len, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& p = prefixes[stepping[static_cast<std::size_t>(k)]];
      batch.features.col(k) = features[stepping[static_cast<std::size_t>(k)]];
      for (std::size_t t = 0; t < p.size(); ++t) batch.tokens(static_cast<Eigen::Index>(t), k) = p[t];
      batch.lengths.push_back(static_cast<int>(p.size()));
    }
    const MatrixXf probs = model.predict(batch);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto i = stepping[static_cast<std::size_t>(k)];
      int best = -1;
      for (int w = 1; w < config.vocab_size; ++w) {
        if (w == start) continue;
        if (best < 0 || probs(w, k) > probs(best, k)) best = w;
      }
      if (best == end) {
        results[i].stop_reason = StopReason::kEndMarker;
        continue;
      }
      prefixes[i].push_back(best);
      still.push_back(i);
    }
    active = std::move(still);
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    results[i].text = decode_tokens(prefixes[i], vocab, true);
    results[i].token_count = static_cast<int>(prefixes[i].size()) - 1;
  }
  return results;
}

} // namespace hindicap
