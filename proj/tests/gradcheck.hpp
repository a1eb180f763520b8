#pragma once

#include "hindicap/model.hpp"

#include <cmath>
#include <map>
#include <random>
#include <string>

namespace hindicap::test {

inline ModelConfig small_config(Variant v, double dropout = 0.0) {
  ModelConfig c;
  c.variant = v;
  c.vocab_size = 8;
  c.max_len = 5;
  c.feature_dim = 6;
  c.embed_dim = 5;
  c.hidden_units = 4;
  c.dropout_rate = dropout;
  c.seed = 3;
  return c;
}

template <typename S>
inline BatchInput<S> random_batch(const ModelConfig& c, int batch, std::mt19937_64& rng, int extra_rows = 0) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> len(1, c.max_len), tok(1, c.vocab_size - 1);
  BatchInput<S> in;
  in.features = MatrixX<S>(c.feature_dim, batch);
  for (Eigen::Index i = 0; i < in.features.size(); ++i) in.features.data()[i] = static_cast<S>(normal(rng));
  in.tokens = TokenMatrix::Zero(c.max_len + extra_rows, batch);
  for (int b = 0; b < batch; ++b) {
    in.lengths.push_back(len(rng));
    for (int t = 0; t < in.lengths.back(); ++t) in.tokens(t, b) = tok(rng);
  }
  return in;
}

// Central differences against the analytic gradient of every entry of every tensor.
// Dropout masks are frozen by replaying the same generator state for each evaluation.
// Returns the per-tensor relative error ||a - n|| / max(||a||, ||n||); entries of
// magnitude >= 1e-5 are also checked one by one against the same bound.
inline std::map<std::string, double> tensor_errors(Variant v, double dropout, std::uint64_t seed, double& worst_entry) {
  const auto config = small_config(v, dropout);
  auto model = CaptionModel<double>::build(config);
  std::mt19937_64 data_rng(seed);
  const auto batch = random_batch<double>(config, 3, data_rng);
  std::uniform_int_distribution<int> tok(1, config.vocab_size - 1);
  const std::vector<int> targets{tok(data_rng), tok(data_rng), tok(data_rng)};
  const std::mt19937_64 mask_rng(seed + 100);

  auto loss_at = [&](std::mt19937_64 r) { return model.loss_and_gradients(batch, targets, dropout > 0 ? &r : nullptr).loss; };
  std::mt19937_64 r0 = mask_rng;
  const auto analytic = model.loss_and_gradients(batch, targets, dropout > 0 ? &r0 : nullptr).gradients;
  std::vector<double> flat_grad;
  analytic.for_each([&](const char*, const auto& g) {
    for (Eigen::Index i = 0; i < g.size(); ++i) flat_grad.push_back(g.data()[i]);
  });

  const double h = 1e-6;
  std::map<std::string, double> errors;
  worst_entry = 0;
  std::size_t k = 0;
  model.parameters().for_each([&](const char* name, auto& p) {
    double diff2 = 0, a2 = 0, n2 = 0;
    for (Eigen::Index i = 0; i < p.size(); ++i, ++k) {
      const double saved = p.data()[i];
      p.data()[i] = saved + h;
      const double up = loss_at(mask_rng);
      p.data()[i] = saved - h;
      const double down = loss_at(mask_rng);
      p.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = flat_grad[k];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      const double scale = std::max(std::abs(a), std::abs(numeric));
      if (scale >= 1e-5) worst_entry = std::max(worst_entry, std::abs(a - numeric) / scale);
    }
    const double scale = std::sqrt(std::max(a2, n2));
    errors[name] = scale == 0 ? 0 : std::sqrt(diff2) / scale;
  });
  return errors;
}

} // namespace hindicap::test
