#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hindicap/corpus.hpp"
#include "hindicap/features.hpp"
#include "hindicap/model.hpp"

namespace hindicap {

struct TrainingSample {
  std::string image_id;
  EncodedCaption prefix;
  int target = 0;
};

/// Teacher-forcing expansion: a caption of L tokens yields L - 1 samples, the i-th
/// predicting token i + 1 from the first i tokens.
std::vector<TrainingSample> make_training_samples(std::string_view caption, const Vocabulary& vocab, int max_len,
                                                  const std::string& image_id = {});

/// Tracks how many samples are materialized at once.
class ResidentCounter {
 public:
  void acquire(std::size_t n);
  void release(std::size_t n);
  std::size_t current() const { return current_.load(); }
  std::size_t peak() const { return peak_.load(); }

 private:
  std::atomic<std::size_t> current_{0};
  std::atomic<std::size_t> peak_{0};
};

struct Batch {
  Batch() = default;
  Batch(Batch&&) noexcept;
  Batch& operator=(Batch&&) noexcept;
  Batch(const Batch&) = delete;
  Batch& operator=(const Batch&) = delete;
  ~Batch();

  std::vector<std::string> image_ids;
  BatchInput<float> input;
  std::vector<int> targets;

  std::size_t size() const { return targets.size(); }

 private:
  friend class BatchGenerator;
  std::shared_ptr<ResidentCounter> counter_;
};

/// Streams teacher-forced batches over the train split. Only the encoded captions and a
/// per-epoch order of sample ids are kept; feature/prefix tensors exist for one batch at a time.
class BatchGenerator {
 public:
  /// Uses the train split of `corpus` (wrapped captions). Captions with words outside `vocab`
  /// are skipped and counted. Throws LoadError naming any train image missing from `features`.
  BatchGenerator(const Corpus& corpus, const FeatureCache& features, const Vocabulary& vocab, int max_len,
                 int batch_size, std::uint64_t seed);

  std::size_t samples_per_epoch() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t batches_per_epoch() const;
  std::size_t skipped_captions() const { return skipped_; }
  int batch_size() const { return batch_size_; }
  int feature_dim() const { return features_->feature_dim(); }
  int max_len() const { return max_len_; }

  /// Resets iteration; the order is a pure function of (seed, epoch).
  void start_epoch(int epoch);
  std::optional<Batch> next();

  const ResidentCounter& residency() const { return *counter_; }

 private:
  struct Source {
    std::string image_id;
    EncodedCaption caption;
  };
  const FeatureCache* features_;
  int max_len_;
  int batch_size_;
  std::uint64_t seed_;
  std::vector<Source> sources_;
  std::vector<std::size_t> offsets_;  // prefix sums of (L - 1) per source
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
  std::size_t skipped_ = 0;
  std::shared_ptr<ResidentCounter> counter_ = std::make_shared<ResidentCounter>();
};

template <typename S>
class Adam {
 public:
  Adam(const ModelConfig& config, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  void step(ModelParameters<S>& params, const ModelParameters<S>& grads);
  long long steps() const { return t_; }

 private:
  ModelParameters<S> m_;
  ModelParameters<S> v_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

struct TrainOptions {
  int epochs = 10;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Drives dropout; the shuffle order belongs to the generator's seed.
  std::uint64_t seed = 0;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct TrainResult {
  /// Sample-weighted mean cross-entropy per epoch.
  std::vector<double> loss_history;
};

/// Mean categorical cross-entropy minimized with Adam. Throws TrainingError on a non-finite loss.
TrainResult train(CaptionModel<float>& model, BatchGenerator& generator, const TrainOptions& options);

std::string loss_history_csv(const std::vector<double>& history);

struct TrainRunSpec {
  ModelConfig config;
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int repetitions = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RunScores {
  std::uint64_t seed = 0;
  std::array<double, 4> bleu{};
  std::vector<double> loss_history;
};

struct RepeatedRuns {
  std::vector<RunScores> runs;
  std::array<double, 4> mean_bleu{};
};

/// Calls `run(run_index, seed)` for run_index in [0, repetitions) with seed = spec.seed + run_index
/// and averages the BLEU scores.
RepeatedRuns repeat_runs(const TrainRunSpec& spec, const std::function<RunScores(int, std::uint64_t)>& run);

extern template class Adam<float>;
extern template class Adam<double>;

} // namespace hindicap
