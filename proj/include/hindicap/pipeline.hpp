#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hindicap/corpus.hpp"
#include "hindicap/evaluation.hpp"
#include "hindicap/features.hpp"
#include "hindicap/model.hpp"
#include "hindicap/training.hpp"
#include "hindicap/translate.hpp"

namespace hindicap {

struct GridCell {
  std::string backend;
  Variant variant = Variant::kLstm;
  int epochs = 10;
};

/// Parses `backend:variant:epochs[,...]`, e.g. `vgg16:AttBiLSTM:20,stub:LSTM:50`.
std::vector<GridCell> parse_grid(const std::string& text);

struct PipelineConfig {
  struct Paths {
    std::filesystem::path token_file;
    std::filesystem::path train_split;
    std::filesystem::path test_split;
    std::filesystem::path image_dir;
    std::filesystem::path cache_dir = "cache";
    std::filesystem::path output_dir = "out";
    std::filesystem::path weights_dir = "weights";
  } paths;

  struct CorpusKnobs {
    int captions_per_image = 5;
    bool clean = true;
    double train_fraction = 0.5;
    std::uint64_t split_seed = 0;
    int min_count = 1;
  } corpus;

  struct ModelKnobs {
    Variant variant = Variant::kAttBiLstm;
    int embed_dim = 256;
    int hidden_units = 256;
    double dropout_rate = 0.5;
  } model;

  struct TrainingKnobs {
    int epochs = 20;
    int batch_size = 64;
    double learning_rate = 1e-3;
    int repetitions = 5;
    std::uint64_t seed = 0;
  } training;

  std::string backend = "vgg16";
  int stub_dim = 64;
  std::uint64_t stub_seed = 0;

  struct TranslationKnobs {
    std::string endpoint = "https://translation.googleapis.com/language/translate/v2";
    std::string api_key_env = "HINDICAP_TRANSLATE_API_KEY";
    std::string source_lang = "en";
    std::string target_lang = "hi";
    std::size_t batch_size = 100;
    std::size_t max_inflight = 1;
    int max_attempts = 5;
    int initial_backoff_ms = 500;
    int max_backoff_ms = 30000;
  } translation;

  std::vector<GridCell> grid;

  /// Keys missing from the JSON keep their defaults; unknown keys are rejected.
  static PipelineConfig from_json(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& path);
  std::string to_json() const;
};

/// A prepared dataset: wrapped captions with split labels, the train vocabulary and max_len.
struct PreparedData {
  Corpus corpus;
  Vocabulary vocab;
  int max_len = 0;
  std::size_t raw_distinct_words = 0;
  std::size_t clean_distinct_words = 0;
};

/// Loads, cleans (optionally), reduces, splits and wraps the token file, then builds the vocabulary.
PreparedData prepare_dataset(const PipelineConfig& config);
PreparedData prepare_corpus(const Corpus& raw, const PipelineConfig& config);

/// Directory layout: corpus.tsv, train_ids.txt, test_ids.txt, vocab.txt, meta.json.
void save_prepared(const PreparedData& data, const std::filesystem::path& dir);
PreparedData load_prepared(const std::filesystem::path& dir);

struct TrainedRun {
  CaptionModel<float> model;
  TrainResult history;
};

/// Builds and trains one model on the train split. Model init, shuffle order and dropout all derive from `seed`.
TrainedRun train_on(const PreparedData& data, const FeatureCache& features, Variant variant, int epochs,
                    const PipelineConfig& config, std::uint64_t seed);

struct ExperimentRow {
  GridCell cell;
  std::array<double, 4> bleu{};
  std::vector<RunScores> runs;
  std::string error;  // non-empty when the cell failed

  bool failed() const { return !error.empty(); }
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;
  bool any_failed() const;
};

/// Trains and evaluates every grid cell through repeat_runs on the test split. Feature caches
/// are read from <cache_dir>/<backend>. A failing cell is recorded and the rest still run.
ExperimentResult run_experiment(const PipelineConfig& config, const PreparedData& data,
                                const std::vector<GridCell>& grid,
                                const std::function<void(const std::string&)>& log = {});

std::string render_table(const ExperimentResult& result);
/// backend,variant,best_epochs,bleu_1..bleu_4,seeds,status
std::string experiment_csv(const ExperimentResult& result);

} // namespace hindicap
