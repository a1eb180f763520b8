#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hindicap/corpus.hpp"
#include "hindicap/eigen_types.hpp"
#include "hindicap/layers.hpp"

namespace hindicap {

enum class Variant { kLstm, kBiLstm, kAttBiLstm };

std::string to_string(Variant variant);
/// Accepts lstm | bilstm | attbilstm (case-insensitive, '-' and '_' ignored).
Variant parse_variant(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::kLstm;
  int vocab_size = 0;
  int max_len = 0;
  int feature_dim = 0;
  int embed_dim = 256;
  int hidden_units = 256;
  double dropout_rate = 0.5;
  std::uint64_t seed = 0;

  bool bidirectional() const { return variant != Variant::kLstm; }
  bool attention() const { return variant == Variant::kAttBiLstm; }
  /// Throws ArgumentError on out-of-range fields.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Learned parameters of the merge captioner.
///
///   image  : feature -> dropout -> affine(hidden)
///   text   : tokens -> embedding (index 0 masked) -> dropout -> LSTM, or a sum of
///            forward and backward LSTM final states for the bidirectional variants
///   merge  : image + text
///   attend : (AttBiLSTM only) additive attention over the per-step Bi-LSTM states with the
///            merged vector as query; the context vector is added to the merged vector
///   head   : affine(hidden) -> ReLU -> affine(vocab) -> softmax
template <typename S>
struct ModelParameters {
  Affine<S> image;
  MatrixX<S> embedding;  // embed_dim x vocab_size, one column per word
  LstmWeights<S> forward;
  LstmWeights<S> backward;
  AttentionWeights<S> attention;
  Affine<S> hidden;
  Affine<S> output;

  /// Zero-initialized parameters shaped for `config`.
  static ModelParameters zeros(const ModelConfig& config);

  /// Visits every present tensor in a fixed order as fn(name, tensor).
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

  std::size_t count() const;

 private:
  template <typename Self, typename Fn>
  static void visit(Self& p, Fn& fn) {
    fn("image.weight", p.image.weight);
    fn("image.bias", p.image.bias);
    fn("embedding", p.embedding);
    fn("lstm_forward.input_weight", p.forward.input_weight);
    fn("lstm_forward.recurrent_weight", p.forward.recurrent_weight);
    fn("lstm_forward.bias", p.forward.bias);
    if (!p.backward.empty()) {
      fn("lstm_backward.input_weight", p.backward.input_weight);
      fn("lstm_backward.recurrent_weight", p.backward.recurrent_weight);
      fn("lstm_backward.bias", p.backward.bias);
    }
    if (!p.attention.empty()) {
      fn("attention.state_weight", p.attention.state_weight);
      fn("attention.query_weight", p.attention.query_weight);
      fn("attention.bias", p.attention.bias);
      fn("attention.score", p.attention.score);
    }
    fn("hidden.weight", p.hidden.weight);
    fn("hidden.bias", p.hidden.bias);
    fn("output.weight", p.output.weight);
    fn("output.bias", p.output.bias);
  }
};

std::size_t parameter_count(const ModelConfig& config);

/// A batch of (image feature, caption prefix) pairs; column b is one sample.
template <typename S>
struct BatchInput {
  MatrixX<S> features;       // feature_dim x B
  TokenMatrix tokens;        // rows >= max(lengths), B columns; entries past a length are ignored
  std::vector<int> lengths;  // valid prefix length per column, >= 1

  Eigen::Index size() const { return features.cols(); }
};

template <typename S>
struct LossAndGradients {
  S loss = 0;
  ModelParameters<S> gradients;
};

template <typename S>
class CaptionModel {
 public:
  CaptionModel() = default;
  CaptionModel(ModelConfig config, ModelParameters<S> parameters);

  /// Glorot-uniform weights, uniform(-0.05, 0.05) embeddings, zero biases with forget-gate bias 1.
  /// Initialization depends only on config.seed.
  static CaptionModel build(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const ModelParameters<S>& parameters() const { return params_; }
  ModelParameters<S>& parameters() { return params_; }

  /// Next-word distributions, one column per sample. `rng` enables training-mode dropout.
  MatrixX<S> predict(const BatchInput<S>& batch, std::mt19937_64* rng = nullptr) const;

  /// Mean cross-entropy of `targets` and its gradient. Dropout is applied when `rng` is set.
  LossAndGradients<S> loss_and_gradients(const BatchInput<S>& batch, const std::vector<int>& targets,
                                         std::mt19937_64* rng = nullptr) const;

  /// Inference-mode next-word distribution for one prefix; positions at or past
  /// `prefix.true_length` are ignored.
  VectorX<S> forward_step(const VectorX<S>& feature, const EncodedCaption& prefix) const;

  template <typename T>
  CaptionModel<T> cast() const;

 private:
  struct Trace;
  Trace run_forward(const BatchInput<S>& batch, std::mt19937_64* rng) const;

  ModelConfig config_;
  ModelParameters<S> params_;
};

/// Standalone attention pooling for a single sample: weights and context vector.
template <typename S>
struct AttentionResult {
  VectorX<S> context;
  VectorX<S> weights;
};

template <typename S>
AttentionResult<S> attention_combine(const AttentionWeights<S>& weights, const std::vector<VectorX<S>>& states,
                                     const VectorX<S>& query);

template <typename S>
template <typename T>
CaptionModel<T> CaptionModel<S>::cast() const {
  ModelParameters<T> out = ModelParameters<T>::zeros(config_);
  // Both visits walk the same fixed order.
  std::vector<MatrixX<T>> flat;
  params_.for_each([&](const char*, const auto& tensor) {
    flat.push_back(tensor.template cast<T>());
  });
  std::size_t i = 0;
  out.for_each([&](const char*, auto& tensor) {
    tensor = flat[i++];
  });
  return CaptionModel<T>(config_, std::move(out));
}

extern template struct ModelParameters<float>;
extern template struct ModelParameters<double>;
extern template class CaptionModel<float>;
extern template class CaptionModel<double>;

} // namespace hindicap
