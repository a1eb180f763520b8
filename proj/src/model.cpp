#include "hindicap/model.hpp"

#include <algorithm>
#include <cctype>

namespace hindicap {

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kLstm: return "LSTM";
    case Variant::kBiLstm: return "BiLSTM";
    case Variant::kAttBiLstm: return "AttBiLSTM";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  std::string key;
  for (char c : name)
    if (c != '-' && c != '_') key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (key == "lstm") return Variant::kLstm;
  if (key == "bilstm") return Variant::kBiLstm;
  if (key == "attbilstm") return Variant::kAttBiLstm;
  throw ArgumentError("unknown model variant: " + name);
}

void ModelConfig::validate() const {
  if (vocab_size < 3) throw ArgumentError("vocab_size must be >= 3 (padding plus both markers)");
  if (max_len < 2) throw ArgumentError("max_len must be >= 2");
  if (feature_dim < 1 || embed_dim < 1 || hidden_units < 1) throw ArgumentError("dimensions must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ArgumentError("dropout_rate must lie in [0, 1)");
}

template <typename S>
ModelParameters<S> ModelParameters<S>::zeros(const ModelConfig& c) {
  c.validate();
  ModelParameters p;
  p.image = Affine<S>(c.hidden_units, c.feature_dim);
  p.embedding = MatrixX<S>::Zero(c.embed_dim, c.vocab_size);
  p.forward = LstmWeights<S>(c.embed_dim, c.hidden_units);
  if (c.bidirectional()) p.backward = LstmWeights<S>(c.embed_dim, c.hidden_units);
  if (c.attention()) p.attention = AttentionWeights<S>(c.hidden_units, c.hidden_units, c.hidden_units);
  p.hidden = Affine<S>(c.hidden_units, c.hidden_units);
  p.output = Affine<S>(c.vocab_size, c.hidden_units);
  return p;
}

template <typename S>
std::size_t ModelParameters<S>::count() const {
  std::size_t n = 0;
  for_each([&](const char*, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

std::size_t parameter_count(const ModelConfig& config) { return ModelParameters<float>::zeros(config).count(); }

template <typename S>
CaptionModel<S>::CaptionModel(ModelConfig config, ModelParameters<S> parameters)
    : config_(std::move(config)), params_(std::move(parameters)) {
  config_.validate();
  const auto expected = ModelParameters<S>::zeros(config_);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  expected.for_each([&](const char*, const auto& t) { shapes.emplace_back(t.rows(), t.cols()); });
  std::size_t i = 0;
  params_.for_each([&](const char* name, const auto& t) {
    if (i >= shapes.size() || shapes[i].first != t.rows() || shapes[i].second != t.cols())
      throw DimensionError(std::string("parameter ") + name + " has a shape inconsistent with the config");
    ++i;
  });
  if (i != shapes.size()) throw DimensionError("parameter set does not match the model variant");
}

template <typename S>
CaptionModel<S> CaptionModel<S>::build(const ModelConfig& config) {
  auto p = ModelParameters<S>::zeros(config);
  std::mt19937_64 rng(config.seed);
  auto glorot = [&](MatrixX<S>& m, Eigen::Index fan_in, Eigen::Index fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<S>(u(rng));
  };
  auto glorot_dense = [&](MatrixX<S>& m) { glorot(m, m.cols(), m.rows()); };
  glorot_dense(p.image.weight);
  {
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (Eigen::Index j = 0; j < p.embedding.cols(); ++j)
      for (Eigen::Index i = 0; i < p.embedding.rows(); ++i) p.embedding(i, j) = static_cast<S>(u(rng));
    p.embedding.col(kPaddingIndex).setZero();
  }
  auto init_lstm = [&](LstmWeights<S>& w) {
    glorot_dense(w.input_weight);
    glorot_dense(w.recurrent_weight);
    w.bias.segment(w.hidden(), w.hidden()).setOnes();
  };
  init_lstm(p.forward);
  if (config.bidirectional()) init_lstm(p.backward);
  if (config.attention()) {
    glorot_dense(p.attention.state_weight);
    glorot_dense(p.attention.query_weight);
    MatrixX<S> v(p.attention.score.size(), 1);
    glorot(v, v.rows(), 1);
    p.attention.score = v.col(0);
  }
  glorot_dense(p.hidden.weight);
  glorot_dense(p.output.weight);
  return CaptionModel(config, std::move(p));
}

template <typename S>
struct CaptionModel<S>::Trace {
  std::vector<int> lengths;
  Eigen::Index steps = 0;
  MatrixX<S> image_input;                  // features after dropout
  std::vector<MatrixX<S>> embedding_mask;  // per step, empty when dropout is off
  LstmTrace<S> forward;
  LstmTrace<S> backward;
  AttentionTrace<S> attention;
  MatrixX<S> merged;
  MatrixX<S> combined;
  MatrixX<S> hidden_pre;
  MatrixX<S> hidden;
  MatrixX<S> probs;
};

namespace {

template <typename S>
MatrixX<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - rate);
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  MatrixX<S> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = keep(rng) ? scale : S(0);
  return m;
}

// Position of original step t in the reversed sequence of a column of length len, and vice versa.
inline int mirror(int t, int len) { return len - 1 - t; }

} // namespace

template <typename S>
typename CaptionModel<S>::Trace CaptionModel<S>::run_forward(const BatchInput<S>& batch, std::mt19937_64* rng) const {
  const auto& c = config_;
  const Eigen::Index B = batch.size();
  if (B == 0) throw ArgumentError("empty batch");
  if (batch.features.rows() != c.feature_dim)
    throw DimensionError("feature has " + std::to_string(batch.features.rows()) + " values, model expects " +
                         std::to_string(c.feature_dim));
  if (batch.tokens.cols() != B || static_cast<Eigen::Index>(batch.lengths.size()) != B)
    throw DimensionError("batch tokens, lengths and features disagree on batch size");
  Trace tr;
  tr.lengths = batch.lengths;
  for (Eigen::Index b = 0; b < B; ++b) {
    const int len = batch.lengths[static_cast<std::size_t>(b)];
    if (len < 1 || len > c.max_len || len > batch.tokens.rows())
      throw DimensionError("prefix length " + std::to_string(len) + " outside [1, max_len]");
    for (int t = 0; t < len; ++t) {
      const int tok = batch.tokens(t, b);
      if (tok <= kPaddingIndex || tok >= c.vocab_size)
        throw ArgumentError("token index " + std::to_string(tok) + " invalid inside the prefix");
    }
    tr.steps = std::max<Eigen::Index>(tr.steps, len);
  }
  const bool training = rng != nullptr && c.dropout_rate > 0.0;

  tr.image_input = batch.features;
  if (training) tr.image_input.array() *= dropout_mask<S>(c.feature_dim, B, c.dropout_rate, *rng).array();

  const auto T = static_cast<std::size_t>(tr.steps);
  StepMask active(T, std::vector<bool>(static_cast<std::size_t>(B)));
  std::vector<MatrixX<S>> embedded(T, MatrixX<S>::Zero(c.embed_dim, B));
  for (std::size_t t = 0; t < T; ++t) {
    for (Eigen::Index b = 0; b < B; ++b) {
      const bool on = static_cast<int>(t) < batch.lengths[static_cast<std::size_t>(b)];
      active[t][static_cast<std::size_t>(b)] = on;
      if (on) embedded[t].col(b) = params_.embedding.col(batch.tokens(static_cast<Eigen::Index>(t), b));
    }
    if (training) {
      tr.embedding_mask.push_back(dropout_mask<S>(c.embed_dim, B, c.dropout_rate, *rng));
      embedded[t].array() *= tr.embedding_mask.back().array();
    }
  }

  std::vector<MatrixX<S>> reversed;
  if (c.bidirectional()) {
    reversed.assign(T, MatrixX<S>::Zero(c.embed_dim, B));
    for (Eigen::Index b = 0; b < B; ++b) {
      const int len = batch.lengths[static_cast<std::size_t>(b)];
      for (int t = 0; t < len; ++t) reversed[static_cast<std::size_t>(t)].col(b) = embedded[static_cast<std::size_t>(mirror(t, len))].col(b);
    }
  }
  tr.forward = lstm_forward(params_.forward, std::move(embedded), active);
  MatrixX<S> text = tr.forward.final_hidden();
  if (c.bidirectional()) {
    tr.backward = lstm_forward(params_.backward, std::move(reversed), active);
    text += tr.backward.final_hidden();
  }

  tr.merged = affine_forward(params_.image, tr.image_input) + text;
  tr.combined = tr.merged;
  if (c.attention()) {
    std::vector<MatrixX<S>> states(T, MatrixX<S>::Zero(c.hidden_units, B));
    for (Eigen::Index b = 0; b < B; ++b) {
      const int len = batch.lengths[static_cast<std::size_t>(b)];
      for (int t = 0; t < len; ++t)
        states[static_cast<std::size_t>(t)].col(b) =
            tr.forward.hidden[static_cast<std::size_t>(t)].col(b) +
            tr.backward.hidden[static_cast<std::size_t>(mirror(t, len))].col(b);
    }
    tr.attention = attention_forward(params_.attention, std::move(states), tr.merged, batch.lengths);
    tr.combined += tr.attention.context;
  }
  tr.hidden_pre = affine_forward(params_.hidden, tr.combined);
  tr.hidden = relu<S>(tr.hidden_pre);
  tr.probs = softmax_columns<S>(affine_forward(params_.output, tr.hidden));
  return tr;
}

template <typename S>
MatrixX<S> CaptionModel<S>::predict(const BatchInput<S>& batch, std::mt19937_64* rng) const {
  return run_forward(batch, rng).probs;
}

template <typename S>
LossAndGradients<S> CaptionModel<S>::loss_and_gradients(const BatchInput<S>& batch, const std::vector<int>& targets,
                                                        std::mt19937_64* rng) const {
  const auto& c = config_;
  const Eigen::Index B = batch.size();
  if (static_cast<Eigen::Index>(targets.size()) != B) throw DimensionError("one target per sample required");
  for (int t : targets)
    if (t <= kPaddingIndex || t >= c.vocab_size) throw ArgumentError("target index out of range");
  Trace tr = run_forward(batch, rng);

  LossAndGradients<S> out;
  out.gradients = ModelParameters<S>::zeros(c);
  auto& g = out.gradients;
  // Loss from the probabilities already computed; clamp keeps log finite for p underflow.
  S loss = 0;
  for (Eigen::Index b = 0; b < B; ++b)
    loss -= std::log(std::max(tr.probs(targets[static_cast<std::size_t>(b)], b), std::numeric_limits<S>::min()));
  out.loss = loss / static_cast<S>(B);

  MatrixX<S> d_logits = softmax_cross_entropy_backward<S>(tr.probs, targets);
  MatrixX<S> d_hidden = affine_backward(params_.output, tr.hidden, d_logits, g.output);
  MatrixX<S> d_combined = affine_backward(params_.hidden, tr.combined, relu_backward<S>(tr.hidden_pre, d_hidden), g.hidden);
  MatrixX<S> d_merged = d_combined;

  const auto T = static_cast<std::size_t>(tr.steps);
  std::vector<MatrixX<S>> d_forward_steps, d_backward_steps;
  if (c.attention()) {
    auto ag = attention_backward(params_.attention, tr.attention, d_combined, g.attention);
    d_merged += ag.d_query;
    d_forward_steps.assign(T, MatrixX<S>::Zero(c.hidden_units, B));
    d_backward_steps.assign(T, MatrixX<S>::Zero(c.hidden_units, B));
    for (Eigen::Index b = 0; b < B; ++b) {
      const int len = tr.lengths[static_cast<std::size_t>(b)];
      for (int t = 0; t < len; ++t) {
        d_forward_steps[static_cast<std::size_t>(t)].col(b) += ag.d_states[static_cast<std::size_t>(t)].col(b);
        d_backward_steps[static_cast<std::size_t>(mirror(t, len))].col(b) += ag.d_states[static_cast<std::size_t>(t)].col(b);
      }
    }
  }
  affine_backward(params_.image, tr.image_input, d_merged, g.image);

  auto d_embedded = lstm_backward(params_.forward, tr.forward, d_forward_steps, d_merged, g.forward);
  if (c.bidirectional()) {
    auto d_reversed = lstm_backward(params_.backward, tr.backward, d_backward_steps, d_merged, g.backward);
    for (Eigen::Index b = 0; b < B; ++b) {
      const int len = tr.lengths[static_cast<std::size_t>(b)];
      for (int t = 0; t < len; ++t)
        d_embedded[static_cast<std::size_t>(mirror(t, len))].col(b) += d_reversed[static_cast<std::size_t>(t)].col(b);
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    if (!tr.embedding_mask.empty()) d_embedded[t].array() *= tr.embedding_mask[t].array();
    for (Eigen::Index b = 0; b < B; ++b)
      if (static_cast<int>(t) < tr.lengths[static_cast<std::size_t>(b)])
        g.embedding.col(batch.tokens(static_cast<Eigen::Index>(t), b)) += d_embedded[t].col(b);
  }
  return out;
}

template <typename S>
VectorX<S> CaptionModel<S>::forward_step(const VectorX<S>& feature, const EncodedCaption& prefix) const {
  if (feature.size() != config_.feature_dim)
    throw DimensionError("feature has " + std::to_string(feature.size()) + " values, model expects " +
                         std::to_string(config_.feature_dim));
  if (prefix.true_length < 1 || prefix.true_length > config_.max_len ||
      prefix.true_length > static_cast<int>(prefix.tokens.size()))
    throw DimensionError("prefix length outside [1, max_len]");
  BatchInput<S> batch;
  batch.features = feature;
  batch.tokens = TokenMatrix(prefix.true_length, 1);
  for (int t = 0; t < prefix.true_length; ++t) batch.tokens(t, 0) = prefix.tokens[static_cast<std::size_t>(t)];
  batch.lengths = {prefix.true_length};
  return run_forward(batch, nullptr).probs.col(0);
}

template <typename S>
AttentionResult<S> attention_combine(const AttentionWeights<S>& weights, const std::vector<VectorX<S>>& states,
                                     const VectorX<S>& query) {
  if (states.empty()) throw ArgumentError("attention over an empty sequence");
  std::vector<MatrixX<S>> cols;
  for (const auto& s : states) {
    if (s.size() != states.front().size()) throw DimensionError("attention states differ in dimension");
    cols.emplace_back(s);
  }
  auto tr = attention_forward<S>(weights, std::move(cols), query, {static_cast<int>(states.size())});
  return {tr.context.col(0), tr.weights.col(0)};
}

template struct ModelParameters<float>;
template struct ModelParameters<double>;
template class CaptionModel<float>;
template class CaptionModel<double>;
template AttentionResult<float> attention_combine(const AttentionWeights<float>&, const std::vector<VectorX<float>>&,
                                                  const VectorX<float>&);
template AttentionResult<double> attention_combine(const AttentionWeights<double>&,
                                                   const std::vector<VectorX<double>>&, const VectorX<double>&);

} // namespace hindicap
