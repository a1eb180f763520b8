#include "hindicap/training.hpp"

#include "hindicap/error.hpp"
#include "hindicap/unicode.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace hindicap {

std::vector<TrainingSample> make_training_samples(std::string_view caption, const Vocabulary& vocab, int max_len,
                                                  const std::string& image_id) {
  const EncodedCaption full = encode_caption(caption, vocab, max_len);
  if (full.true_length < 2) throw ArgumentError("caption needs at least two tokens to form a training sample");
  std::vector<TrainingSample> out;
  for (int i = 1; i < full.true_length; ++i) {
    TrainingSample s;
    s.image_id = image_id;
    s.prefix.tokens.assign(static_cast<std::size_t>(max_len), kPaddingIndex);
    std::copy_n(full.tokens.begin(), i, s.prefix.tokens.begin());
    s.prefix.true_length = i;
    s.target = full.tokens[static_cast<std::size_t>(i)];
    out.push_back(std::move(s));
  }
  return out;
}

void ResidentCounter::acquire(std::size_t n) {
  const auto now = current_.fetch_add(n) + n;
  auto peak = peak_.load();
  while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
  }
}

void ResidentCounter::release(std::size_t n) { current_.fetch_sub(n); }

Batch::Batch(Batch&& other) noexcept
    : image_ids(std::move(other.image_ids)),
      input(std::move(other.input)),
      targets(std::move(other.targets)),
      counter_(std::move(other.counter_)) {
  other.targets.clear();
}

Batch& Batch::operator=(Batch&& other) noexcept {
  if (this != &other) {
    if (counter_) counter_->release(targets.size());
    image_ids = std::move(other.image_ids);
    input = std::move(other.input);
    targets = std::move(other.targets);
    counter_ = std::move(other.counter_);
    other.targets.clear();
  }
  return *this;
}

Batch::~Batch() {
  if (counter_) counter_->release(targets.size());
}

BatchGenerator::BatchGenerator(const Corpus& corpus, const FeatureCache& features, const Vocabulary& vocab,
                               int max_len, int batch_size, std::uint64_t seed)
    : features_(&features), max_len_(max_len), batch_size_(batch_size), seed_(seed) {
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  offsets_.push_back(0);
  for (const auto& [id, caps] : corpus.entries) {
    auto s = corpus.split.find(id);
    if (s != corpus.split.end() && s->second != Split::kTrain) continue;
    if (!features.contains(id)) throw LoadError("no cached feature for train image " + id);
    for (const auto& c : caps) {
      EncodedCaption enc;
      try {
        enc = encode_caption(c, vocab, max_len);
      } catch (const VocabularyError&) {
        ++skipped_;
        continue;
      }
      if (enc.true_length < 2) throw ArgumentError("caption of image " + id + " has fewer than two tokens");
      offsets_.push_back(offsets_.back() + static_cast<std::size_t>(enc.true_length - 1));
      sources_.push_back({id, std::move(enc)});
    }
  }
  if (samples_per_epoch() > UINT32_MAX) throw ArgumentError("too many samples for one epoch");
  start_epoch(0);
}

std::size_t BatchGenerator::batches_per_epoch() const {
  const auto b = static_cast<std::size_t>(batch_size_);
  return (samples_per_epoch() + b - 1) / b;
}

void BatchGenerator::start_epoch(int epoch) {
  order_.resize(samples_per_epoch());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[static_cast<std::size_t>(rng() % i)]);
  cursor_ = 0;
}

std::optional<Batch> BatchGenerator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t n = std::min(order_.size() - cursor_, static_cast<std::size_t>(batch_size_));
  Batch batch;
  batch.counter_ = counter_;
  counter_->acquire(n);
  batch.input.features.resize(features_->feature_dim(), static_cast<Eigen::Index>(n));
  batch.input.tokens = TokenMatrix::Zero(max_len_, static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint32_t sample = order_[cursor_ + k];
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), static_cast<std::size_t>(sample));
    const auto source_index = static_cast<std::size_t>(it - offsets_.begin()) - 1;
    const auto& src = sources_[source_index];
    const int prefix_len = static_cast<int>(sample - offsets_[source_index]) + 1;
    const auto col = static_cast<Eigen::Index>(k);
    batch.input.features.col(col) = features_->at(src.image_id).vector;
    for (int t = 0; t < prefix_len; ++t) batch.input.tokens(t, col) = src.caption.tokens[static_cast<std::size_t>(t)];
    batch.input.lengths.push_back(prefix_len);
    batch.targets.push_back(src.caption.tokens[static_cast<std::size_t>(prefix_len)]);
    batch.image_ids.push_back(src.image_id);
  }
  cursor_ += n;
  return batch;
}

namespace {

template <typename S>
std::vector<std::pair<S*, Eigen::Index>> flatten(ModelParameters<S>& p) {
  std::vector<std::pair<S*, Eigen::Index>> out;
  p.for_each([&](const char*, auto& t) { out.emplace_back(t.data(), t.size()); });
  return out;
}

template <typename S>
std::vector<std::pair<const S*, Eigen::Index>> flatten(const ModelParameters<S>& p) {
  std::vector<std::pair<const S*, Eigen::Index>> out;
  p.for_each([&](const char*, const auto& t) { out.emplace_back(t.data(), t.size()); });
  return out;
}

} // namespace

template <typename S>
Adam<S>::Adam(const ModelConfig& config, double learning_rate, double beta1, double beta2, double epsilon)
    : m_(ModelParameters<S>::zeros(config)),
      v_(ModelParameters<S>::zeros(config)),
      lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon) {
  if (!(learning_rate > 0)) throw ArgumentError("learning rate must be positive");
}

template <typename S>
void Adam<S>::step(ModelParameters<S>& params, const ModelParameters<S>& grads) {
  ++t_;
  const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
  const S c1 = static_cast<S>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const S c2 = static_cast<S>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
  const S lr = static_cast<S>(lr_), eps = static_cast<S>(eps_);
  auto p = flatten(params);
  auto g = flatten(grads);
  auto m = flatten(m_);
  auto v = flatten(v_);
  for (std::size_t k = 0; k < p.size(); ++k) {
    const Eigen::Index n = p[k].second;
    Eigen::Map<ArrayRow<S>> pk(p[k].first, n), mk(m[k].first, n), vk(v[k].first, n);
    Eigen::Map<const ArrayRow<S>> gk(g[k].first, n);
    mk = b1 * mk + (S(1) - b1) * gk;
    vk = b2 * vk + (S(1) - b2) * gk.square();
    pk -= lr * (mk / c1) / ((vk / c2).sqrt() + eps);
  }
}

template class Adam<float>;
template class Adam<double>;

TrainResult train(CaptionModel<float>& model, BatchGenerator& generator, const TrainOptions& options) {
  if (options.epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (generator.feature_dim() != model.config().feature_dim)
    throw DimensionError("feature cache dimension does not match the model");
  if (generator.max_len() > model.config().max_len) throw DimensionError("generator max_len exceeds the model's");
  if (generator.samples_per_epoch() == 0) throw ArgumentError("no training samples");
  Adam<float> adam(model.config(), options.learning_rate, options.beta1, options.beta2, options.epsilon);
  std::mt19937_64 dropout_rng(options.seed);
  TrainResult result;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    generator.start_epoch(epoch);
    double total = 0;
    std::size_t seen = 0;
    std::size_t batch_index = 0;
    while (auto batch = generator.next()) {
      auto lg = model.loss_and_gradients(batch->input, batch->targets, &dropout_rng);
      if (!std::isfinite(lg.loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(batch_index) + " (learning rate " + std::to_string(options.learning_rate) +
                            ")");
      adam.step(model.parameters(), lg.gradients);
      total += static_cast<double>(lg.loss) * static_cast<double>(batch->size());
      seen += batch->size();
      ++batch_index;
    }
    const double mean = total / static_cast<double>(seen);
    result.loss_history.push_back(mean);
    if (options.on_epoch) options.on_epoch(epoch + 1, mean);
  }
  return result;
}

std::string loss_history_csv(const std::vector<double>& history) {
  std::ostringstream out;
  out << "epoch,loss\n" << std::setprecision(9);
  for (std::size_t i = 0; i < history.size(); ++i) out << i + 1 << ',' << history[i] << '\n';
  return out.str();
}

void TrainRunSpec::validate() const {
  config.validate();
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (repetitions < 1) throw ArgumentError("repetitions must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  if (!(learning_rate > 0)) throw ArgumentError("learning rate must be positive");
}

RepeatedRuns repeat_runs(const TrainRunSpec& spec, const std::function<RunScores(int, std::uint64_t)>& run) {
  spec.validate();
  RepeatedRuns out;
  for (int i = 0; i < spec.repetitions; ++i) {
    const std::uint64_t seed = spec.seed + static_cast<std::uint64_t>(i);
    RunScores scores = run(i, seed);
    scores.seed = seed;
    out.runs.push_back(std::move(scores));
  }
  for (std::size_t n = 0; n < 4; ++n) {
    double sum = 0;
    for (const auto& r : out.runs) sum += r.bleu[n];
    out.mean_bleu[n] = sum / static_cast<double>(out.runs.size());
  }
  return out;
}

} // namespace hindicap
