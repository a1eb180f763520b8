#pragma once

// Dense building blocks with explicit backward passes. Activations are laid out
// one column per sample; every function is templated on the scalar type so the
// same code runs in float for training and in double for gradient checks.

#include <cmath>
#include <limits>
#include <vector>

#include "hindicap/eigen_types.hpp"
#include "hindicap/error.hpp"

namespace hindicap {

template <typename S>
struct Affine {
  MatrixX<S> weight;
  VectorX<S> bias;

  Affine() = default;
  Affine(Eigen::Index out, Eigen::Index in) : weight(MatrixX<S>::Zero(out, in)), bias(VectorX<S>::Zero(out)) {}
};

template <typename S>
MatrixX<S> affine_forward(const Affine<S>& layer, const MatrixX<S>& input) {
  MatrixX<S> out = layer.weight * input;
  out.colwise() += layer.bias;
  return out;
}

/// Accumulates parameter gradients into `grad` and returns d(input).
template <typename S>
MatrixX<S> affine_backward(const Affine<S>& layer, const MatrixX<S>& input, const MatrixX<S>& d_out, Affine<S>& grad) {
  grad.weight.noalias() += d_out * input.transpose();
  grad.bias += d_out.rowwise().sum();
  return layer.weight.transpose() * d_out;
}

template <typename S>
MatrixX<S> relu(const MatrixX<S>& x) {
  return x.cwiseMax(S(0));
}

template <typename S>
MatrixX<S> relu_backward(const MatrixX<S>& pre, const MatrixX<S>& d_out) {
  return (pre.array() > S(0)).select(d_out, MatrixX<S>::Zero(d_out.rows(), d_out.cols()));
}

template <typename S>
MatrixX<S> sigmoid(const MatrixX<S>& x) {
  return (S(1) / (S(1) + (-x.array()).exp())).matrix();
}

/// Column-wise softmax.
template <typename S>
MatrixX<S> softmax_columns(const MatrixX<S>& logits) {
  MatrixX<S> out = logits.rowwise() - logits.colwise().maxCoeff();
  out = out.array().exp().matrix();
  out.array().rowwise() /= out.colwise().sum().array();
  return out;
}

/// Mean negative log-likelihood of `targets` under column-wise softmax of `logits`.
template <typename S>
S softmax_cross_entropy(const MatrixX<S>& logits, const std::vector<int>& targets) {
  S total = 0;
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    const auto col = logits.col(i);
    const S m = col.maxCoeff();
    const S lse = m + std::log((col.array() - m).exp().sum());
    total += lse - col(targets[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<S>(logits.cols());
}

/// d(mean cross-entropy)/d(logits) given the softmax probabilities.
template <typename S>
MatrixX<S> softmax_cross_entropy_backward(const MatrixX<S>& probs, const std::vector<int>& targets) {
  MatrixX<S> d = probs;
  for (Eigen::Index i = 0; i < d.cols(); ++i) d(targets[static_cast<std::size_t>(i)], i) -= S(1);
  return d / static_cast<S>(d.cols());
}

// ---------------------------------------------------------------------------
// LSTM, gate blocks stacked as [input; forget; cell; output].

template <typename S>
struct LstmWeights {
  MatrixX<S> input_weight;      // 4H x D
  MatrixX<S> recurrent_weight;  // 4H x H
  VectorX<S> bias;              // 4H

  LstmWeights() = default;
  LstmWeights(Eigen::Index input_dim, Eigen::Index hidden)
      : input_weight(MatrixX<S>::Zero(4 * hidden, input_dim)),
        recurrent_weight(MatrixX<S>::Zero(4 * hidden, hidden)),
        bias(VectorX<S>::Zero(4 * hidden)) {}

  Eigen::Index hidden() const { return recurrent_weight.cols(); }
  bool empty() const { return recurrent_weight.size() == 0; }
};

/// `active[t][b]` is false once sample b has run out of tokens; its state is then carried unchanged.
using StepMask = std::vector<std::vector<bool>>;

template <typename S>
struct LstmTrace {
  std::vector<MatrixX<S>> inputs;
  std::vector<MatrixX<S>> gates;   // activated gates per step
  std::vector<MatrixX<S>> cell;    // c_t after masking, c[-1] = 0
  std::vector<MatrixX<S>> tanh_cell;
  std::vector<MatrixX<S>> hidden;  // h_t after masking
  StepMask active;

  const MatrixX<S>& final_hidden() const { return hidden.back(); }
};

template <typename S>
LstmTrace<S> lstm_forward(const LstmWeights<S>& w, std::vector<MatrixX<S>> inputs, const StepMask& active) {
  const Eigen::Index H = w.hidden();
  const std::size_t T = inputs.size();
  if (T == 0) throw ArgumentError("LSTM needs at least one step");
  const Eigen::Index B = inputs.front().cols();
  LstmTrace<S> tr;
  tr.inputs = std::move(inputs);
  tr.active = active;
  MatrixX<S> h = MatrixX<S>::Zero(H, B);
  MatrixX<S> c = MatrixX<S>::Zero(H, B);
  for (std::size_t t = 0; t < T; ++t) {
    MatrixX<S> pre = w.input_weight * tr.inputs[t];
    pre.noalias() += w.recurrent_weight * h;
    pre.colwise() += w.bias;
    MatrixX<S> g(4 * H, B);
    g.topRows(2 * H) = sigmoid<S>(pre.topRows(2 * H));
    g.middleRows(2 * H, H) = pre.middleRows(2 * H, H).array().tanh().matrix();
    g.bottomRows(H) = sigmoid<S>(pre.bottomRows(H));
    MatrixX<S> c_new = g.middleRows(H, H).cwiseProduct(c) + g.topRows(H).cwiseProduct(g.middleRows(2 * H, H));
    MatrixX<S> tc = c_new.array().tanh().matrix();
    MatrixX<S> h_new = g.bottomRows(H).cwiseProduct(tc);
    for (Eigen::Index b = 0; b < B; ++b) {
      if (!active[t][static_cast<std::size_t>(b)]) {
        c_new.col(b) = c.col(b);
        h_new.col(b) = h.col(b);
      }
    }
    c = c_new;
    h = h_new;
    tr.gates.push_back(std::move(g));
    tr.cell.push_back(c);
    tr.tanh_cell.push_back(std::move(tc));
    tr.hidden.push_back(h);
  }
  return tr;
}

/// `d_hidden[t]` is the loss gradient w.r.t. the step-t output (may be empty for
/// "no per-step gradient"); `d_final` is the gradient w.r.t. the last hidden state.
/// Returns d(inputs) per step.
template <typename S>
std::vector<MatrixX<S>> lstm_backward(const LstmWeights<S>& w, const LstmTrace<S>& tr,
                                      const std::vector<MatrixX<S>>& d_hidden, const MatrixX<S>& d_final,
                                      LstmWeights<S>& grad) {
  const Eigen::Index H = w.hidden();
  const std::size_t T = tr.inputs.size();
  const Eigen::Index B = tr.inputs.front().cols();
  std::vector<MatrixX<S>> d_inputs(T);
  MatrixX<S> dh_next = d_final;
  MatrixX<S> dc_next = MatrixX<S>::Zero(H, B);
  const MatrixX<S> zeros = MatrixX<S>::Zero(H, B);
  for (std::size_t t = T; t-- > 0;) {
    MatrixX<S> dh = dh_next;
    if (!d_hidden.empty() && d_hidden[t].size() > 0) dh += d_hidden[t];
    MatrixX<S> pass_h = MatrixX<S>::Zero(H, B);
    MatrixX<S> pass_c = MatrixX<S>::Zero(H, B);
    MatrixX<S> dc = dc_next;
    for (Eigen::Index b = 0; b < B; ++b) {
      if (!tr.active[t][static_cast<std::size_t>(b)]) {
        pass_h.col(b) = dh.col(b);
        pass_c.col(b) = dc.col(b);
        dh.col(b).setZero();
        dc.col(b).setZero();
      }
    }
    const MatrixX<S>& g = tr.gates[t];
    const auto gi = g.topRows(H).array();
    const auto gf = g.middleRows(H, H).array();
    const auto gg = g.middleRows(2 * H, H).array();
    const auto go = g.bottomRows(H).array();
    const auto tc = tr.tanh_cell[t].array();
    const MatrixX<S>& c_prev = t > 0 ? tr.cell[t - 1] : zeros;
    const MatrixX<S>& h_prev = t > 0 ? tr.hidden[t - 1] : zeros;

    MatrixX<S> dcn = (dc.array() + dh.array() * go * (S(1) - tc.square())).matrix();
    MatrixX<S> dpre(4 * H, B);
    dpre.topRows(H) = (dcn.array() * gg * gi * (S(1) - gi)).matrix();
    dpre.middleRows(H, H) = (dcn.array() * c_prev.array() * gf * (S(1) - gf)).matrix();
    dpre.middleRows(2 * H, H) = (dcn.array() * gi * (S(1) - gg.square())).matrix();
    dpre.bottomRows(H) = (dh.array() * tc * go * (S(1) - go)).matrix();

    grad.input_weight.noalias() += dpre * tr.inputs[t].transpose();
    grad.recurrent_weight.noalias() += dpre * h_prev.transpose();
    grad.bias += dpre.rowwise().sum();
    d_inputs[t] = w.input_weight.transpose() * dpre;
    dh_next = w.recurrent_weight.transpose() * dpre + pass_h;
    dc_next = (dcn.array() * gf).matrix() + pass_c;
  }
  return d_inputs;
}

// ---------------------------------------------------------------------------
// Additive attention: score_t = v . tanh(Ws s_t + Wq q + b), weights = softmax over valid t.

template <typename S>
struct AttentionWeights {
  MatrixX<S> state_weight;  // A x H
  MatrixX<S> query_weight;  // A x H
  VectorX<S> bias;          // A
  VectorX<S> score;         // A

  AttentionWeights() = default;
  AttentionWeights(Eigen::Index attention_dim, Eigen::Index state_dim, Eigen::Index query_dim)
      : state_weight(MatrixX<S>::Zero(attention_dim, state_dim)),
        query_weight(MatrixX<S>::Zero(attention_dim, query_dim)),
        bias(VectorX<S>::Zero(attention_dim)),
        score(VectorX<S>::Zero(attention_dim)) {}

  bool empty() const { return score.size() == 0; }
};

template <typename S>
struct AttentionTrace {
  std::vector<MatrixX<S>> states;   // T of H x B
  MatrixX<S> query;                 // H x B
  std::vector<MatrixX<S>> hidden;   // T of A x B, tanh activations
  MatrixX<S> weights;               // T x B, zero on padded steps
  MatrixX<S> context;               // H x B
  std::vector<int> lengths;
};

/// `lengths[b]` valid steps for column b (>= 1); steps beyond it get weight 0.
template <typename S>
AttentionTrace<S> attention_forward(const AttentionWeights<S>& w, std::vector<MatrixX<S>> states,
                                    const MatrixX<S>& query, const std::vector<int>& lengths) {
  const std::size_t T = states.size();
  if (T == 0) throw ArgumentError("attention over an empty sequence");
  const Eigen::Index B = query.cols();
  for (int len : lengths)
    if (len < 1 || static_cast<std::size_t>(len) > T) throw ArgumentError("attention length out of range");
  AttentionTrace<S> tr;
  tr.states = std::move(states);
  tr.query = query;
  tr.lengths = lengths;
  MatrixX<S> query_part = w.query_weight * query;
  query_part.colwise() += w.bias;
  MatrixX<S> scores(static_cast<Eigen::Index>(T), B);
  for (std::size_t t = 0; t < T; ++t) {
    MatrixX<S> pre = w.state_weight * tr.states[t] + query_part;
    tr.hidden.push_back(pre.array().tanh().matrix());
    scores.row(static_cast<Eigen::Index>(t)) = w.score.transpose() * tr.hidden.back();
  }
  tr.weights = MatrixX<S>::Zero(static_cast<Eigen::Index>(T), B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Index len = lengths[static_cast<std::size_t>(b)];
    auto valid = scores.col(b).head(len);
    const S m = valid.maxCoeff();
    VectorX<S> e = (valid.array() - m).exp().matrix();
    tr.weights.col(b).head(len) = e / e.sum();
  }
  tr.context = MatrixX<S>::Zero(query.rows(), B);
  for (std::size_t t = 0; t < T; ++t)
    tr.context += tr.states[t] * tr.weights.row(static_cast<Eigen::Index>(t)).asDiagonal();
  return tr;
}

template <typename S>
struct AttentionGradients {
  std::vector<MatrixX<S>> d_states;
  MatrixX<S> d_query;
};

template <typename S>
AttentionGradients<S> attention_backward(const AttentionWeights<S>& w, const AttentionTrace<S>& tr,
                                         const MatrixX<S>& d_context, AttentionWeights<S>& grad) {
  const std::size_t T = tr.states.size();
  const Eigen::Index B = d_context.cols();
  AttentionGradients<S> out;
  out.d_query = MatrixX<S>::Zero(tr.query.rows(), B);
  MatrixX<S> d_weights(static_cast<Eigen::Index>(T), B);
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = static_cast<Eigen::Index>(t);
    out.d_states.push_back(d_context * tr.weights.row(row).asDiagonal());
    d_weights.row(row) = (d_context.cwiseProduct(tr.states[t])).colwise().sum();
  }
  // Softmax backward per column; padded steps have weight 0 and therefore zero score gradient.
  RowVectorX<S> expected = (tr.weights.cwiseProduct(d_weights)).colwise().sum();
  MatrixX<S> d_scores = tr.weights.cwiseProduct(d_weights - expected.replicate(static_cast<Eigen::Index>(T), 1));
  MatrixX<S> d_pre_total = MatrixX<S>::Zero(w.score.size(), B);
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = static_cast<Eigen::Index>(t);
    grad.score.noalias() += tr.hidden[t] * d_scores.row(row).transpose();
    MatrixX<S> d_pre = (w.score * d_scores.row(row)).cwiseProduct(
        (S(1) - tr.hidden[t].array().square()).matrix());
    grad.state_weight.noalias() += d_pre * tr.states[t].transpose();
    out.d_states[t].noalias() += w.state_weight.transpose() * d_pre;
    d_pre_total += d_pre;
  }
  grad.query_weight.noalias() += d_pre_total * tr.query.transpose();
  grad.bias += d_pre_total.rowwise().sum();
  out.d_query = w.query_weight.transpose() * d_pre_total;
  return out;
}

} // namespace hindicap
