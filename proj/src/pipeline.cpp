#include "hindicap/pipeline.hpp"

#include "hindicap/error.hpp"
#include "hindicap/io.hpp"

#include <json.hpp>

#include <iomanip>
#include <sstream>

namespace hindicap {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<GridCell> parse_grid(const std::string& text) {
  std::vector<GridCell> cells;
  std::stringstream items(text);
  std::string item;
  while (std::getline(items, item, ',')) {
    if (item.empty()) continue;
    std::vector<std::string> parts;
    std::stringstream fields(item);
    std::string f;
    while (std::getline(fields, f, ':')) parts.push_back(f);
    if (parts.size() != 3) throw ArgumentError("grid cell must be backend:variant:epochs, got " + item);
    GridCell cell{parts[0], parse_variant(parts[1]), 0};
    try {
      cell.epochs = std::stoi(parts[2]);
    } catch (const std::exception&) {
      throw ArgumentError("bad epoch count in grid cell " + item);
    }
    if (cell.epochs < 1) throw ArgumentError("grid epochs must be >= 1");
    cells.push_back(std::move(cell));
  }
  return cells;
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_path(const json& j, const char* key, fs::path& out) {
  if (j.contains(key)) out = j.at(key).get<std::string>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* known : keys) ok = ok || k == known;
    if (!ok) throw ArgumentError("unknown config key " + where + k);
  }
}

} // namespace

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  PipelineConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    reject_unknown(j, {"paths", "corpus", "model", "training", "backend", "stub_dim", "stub_seed", "translation", "grid"}, "");
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      reject_unknown(p, {"token_file", "train_split", "test_split", "image_dir", "cache_dir", "output_dir", "weights_dir"}, "paths.");
      read_path(p, "token_file", c.paths.token_file);
      read_path(p, "train_split", c.paths.train_split);
      read_path(p, "test_split", c.paths.test_split);
      read_path(p, "image_dir", c.paths.image_dir);
      read_path(p, "cache_dir", c.paths.cache_dir);
      read_path(p, "output_dir", c.paths.output_dir);
      read_path(p, "weights_dir", c.paths.weights_dir);
    }
    if (j.contains("corpus")) {
      const auto& k = j["corpus"];
      reject_unknown(k, {"captions_per_image", "clean", "train_fraction", "split_seed", "min_count"}, "corpus.");
      read(k, "captions_per_image", c.corpus.captions_per_image);
      read(k, "clean", c.corpus.clean);
      read(k, "train_fraction", c.corpus.train_fraction);
      read(k, "split_seed", c.corpus.split_seed);
      read(k, "min_count", c.corpus.min_count);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      reject_unknown(m, {"variant", "embed_dim", "hidden_units", "dropout_rate"}, "model.");
      if (m.contains("variant")) c.model.variant = parse_variant(m["variant"].get<std::string>());
      read(m, "embed_dim", c.model.embed_dim);
      read(m, "hidden_units", c.model.hidden_units);
      read(m, "dropout_rate", c.model.dropout_rate);
    }
    if (j.contains("training")) {
      const auto& t = j["training"];
      reject_unknown(t, {"epochs", "batch_size", "learning_rate", "repetitions", "seed"}, "training.");
      read(t, "epochs", c.training.epochs);
      read(t, "batch_size", c.training.batch_size);
      read(t, "learning_rate", c.training.learning_rate);
      read(t, "repetitions", c.training.repetitions);
      read(t, "seed", c.training.seed);
    }
    read(j, "backend", c.backend);
    read(j, "stub_dim", c.stub_dim);
    read(j, "stub_seed", c.stub_seed);
    if (j.contains("translation")) {
      const auto& t = j["translation"];
      reject_unknown(t, {"endpoint", "api_key_env", "source_lang", "target_lang", "batch_size", "max_inflight",
                         "max_attempts", "initial_backoff_ms", "max_backoff_ms"}, "translation.");
      read(t, "endpoint", c.translation.endpoint);
      read(t, "api_key_env", c.translation.api_key_env);
      read(t, "source_lang", c.translation.source_lang);
      read(t, "target_lang", c.translation.target_lang);
      read(t, "batch_size", c.translation.batch_size);
      read(t, "max_inflight", c.translation.max_inflight);
      read(t, "max_attempts", c.translation.max_attempts);
      read(t, "initial_backoff_ms", c.translation.initial_backoff_ms);
      read(t, "max_backoff_ms", c.translation.max_backoff_ms);
    }
    if (j.contains("grid")) {
      for (const auto& cell : j["grid"]) {
        reject_unknown(cell, {"backend", "variant", "epochs"}, "grid[].");
        c.grid.push_back({cell.at("backend").get<std::string>(), parse_variant(cell.at("variant").get<std::string>()),
                          cell.at("epochs").get<int>()});
      }
    }
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("bad config value: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  if (!fs::exists(path)) throw LoadError("config file not found: " + path.string());
  return from_json(io::read_file(path));
}

std::string PipelineConfig::to_json() const {
  json j;
  j["paths"] = {{"token_file", paths.token_file.string()},   {"train_split", paths.train_split.string()},
                {"test_split", paths.test_split.string()},   {"image_dir", paths.image_dir.string()},
                {"cache_dir", paths.cache_dir.string()},     {"output_dir", paths.output_dir.string()},
                {"weights_dir", paths.weights_dir.string()}};
  j["corpus"] = {{"captions_per_image", corpus.captions_per_image}, {"clean", corpus.clean},
                 {"train_fraction", corpus.train_fraction},         {"split_seed", corpus.split_seed},
                 {"min_count", corpus.min_count}};
  j["model"] = {{"variant", to_string(model.variant)}, {"embed_dim", model.embed_dim},
                {"hidden_units", model.hidden_units}, {"dropout_rate", model.dropout_rate}};
  j["training"] = {{"epochs", training.epochs},       {"batch_size", training.batch_size},
                   {"learning_rate", training.learning_rate}, {"repetitions", training.repetitions},
                   {"seed", training.seed}};
  j["backend"] = backend;
  j["stub_dim"] = stub_dim;
  j["stub_seed"] = stub_seed;
  j["translation"] = {{"endpoint", translation.endpoint},         {"api_key_env", translation.api_key_env},
                      {"source_lang", translation.source_lang},   {"target_lang", translation.target_lang},
                      {"batch_size", translation.batch_size},     {"max_inflight", translation.max_inflight},
                      {"max_attempts", translation.max_attempts}, {"initial_backoff_ms", translation.initial_backoff_ms},
                      {"max_backoff_ms", translation.max_backoff_ms}};
  j["grid"] = json::array();
  for (const auto& g : grid) j["grid"].push_back({{"backend", g.backend}, {"variant", to_string(g.variant)}, {"epochs", g.epochs}});
  return j.dump(2) + "\n";
}

PreparedData prepare_corpus(const Corpus& raw, const PipelineConfig& config) {
  if (raw.entries.empty()) throw ArgumentError("token file produced no captions");
  PreparedData out;
  out.raw_distinct_words = count_distinct_words(raw);
  Corpus corpus = config.corpus.clean ? clean_corpus(raw) : raw;
  out.clean_distinct_words = count_distinct_words(corpus);
  corpus = reduce_captions(corpus, config.corpus.captions_per_image);
  if (!config.paths.train_split.empty() || !config.paths.test_split.empty()) {
    if (config.paths.train_split.empty() || config.paths.test_split.empty())
      throw ArgumentError("both train and test split files are required");
    corpus = split_corpus(corpus, load_split_file(config.paths.train_split), load_split_file(config.paths.test_split));
  } else {
    corpus = split_corpus(corpus, config.corpus.train_fraction, config.corpus.split_seed);
  }
  out.corpus = wrap_corpus(corpus);
  out.vocab = build_vocabulary(out.corpus, config.corpus.min_count);
  out.max_len = max_caption_length(out.corpus);
  return out;
}

PreparedData prepare_dataset(const PipelineConfig& config) {
  auto file = load_token_file(config.paths.token_file);
  return prepare_corpus(Corpus::from_records(file.records), config);
}

void save_prepared(const PreparedData& data, const fs::path& dir) {
  fs::create_directories(dir);
  save_processed_corpus(data.corpus, dir / "corpus.tsv");
  std::string train, test;
  for (const auto& id : data.corpus.ids(Split::kTrain)) train += id + "\n";
  for (const auto& id : data.corpus.ids(Split::kTest)) test += id + "\n";
  io::write_file_atomic(dir / "train_ids.txt", train);
  io::write_file_atomic(dir / "test_ids.txt", test);
  save_vocabulary(data.vocab, dir / "vocab.txt");
  json meta = {{"max_len", data.max_len},
               {"vocab_size", data.vocab.size()},
               {"images", data.corpus.entries.size()},
               {"captions", data.corpus.caption_count()},
               {"train_images", data.corpus.ids(Split::kTrain).size()},
               {"test_images", data.corpus.ids(Split::kTest).size()},
               {"raw_distinct_words", data.raw_distinct_words},
               {"clean_distinct_words", data.clean_distinct_words}};
  io::write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

PreparedData load_prepared(const fs::path& dir) {
  if (!fs::exists(dir / "meta.json")) throw LoadError("not a prepared dataset directory: " + dir.string());
  PreparedData out;
  const Corpus all = load_processed_corpus(dir / "corpus.tsv");
  out.corpus = split_corpus(all, load_split_file(dir / "train_ids.txt"), load_split_file(dir / "test_ids.txt"));
  out.vocab = load_vocabulary(dir / "vocab.txt");
  const auto meta = json::parse(io::read_file(dir / "meta.json"));
  out.max_len = meta.at("max_len");
  out.raw_distinct_words = meta.value("raw_distinct_words", 0);
  out.clean_distinct_words = meta.value("clean_distinct_words", 0);
  if (out.vocab.size() != meta.at("vocab_size").get<int>()) throw IntegrityError("vocab.txt does not match meta.json");
  return out;
}

TrainedRun train_on(const PreparedData& data, const FeatureCache& features, Variant variant, int epochs,
                    const PipelineConfig& config, std::uint64_t seed) {
  ModelConfig mc;
  mc.variant = variant;
  mc.vocab_size = data.vocab.size();
  mc.max_len = data.max_len;
  mc.feature_dim = features.feature_dim();
  mc.embed_dim = config.model.embed_dim;
  mc.hidden_units = config.model.hidden_units;
  mc.dropout_rate = config.model.dropout_rate;
  mc.seed = seed;
  auto model = CaptionModel<float>::build(mc);
  BatchGenerator generator(data.corpus, features, data.vocab, data.max_len, config.training.batch_size, seed);
  TrainOptions options;
  options.epochs = epochs;
  options.learning_rate = config.training.learning_rate;
  options.seed = seed;
  auto history = train(model, generator, options);
  return {std::move(model), std::move(history)};
}

bool ExperimentResult::any_failed() const {
  for (const auto& r : rows)
    if (r.failed()) return true;
  return false;
}

ExperimentResult run_experiment(const PipelineConfig& config, const PreparedData& data,
                                const std::vector<GridCell>& grid, const std::function<void(const std::string&)>& log) {
  if (grid.empty()) throw ArgumentError("experiment grid is empty");
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const Corpus test = data.corpus.subset(Split::kTest);
  ExperimentResult result;
  for (const auto& cell : grid) {
    ExperimentRow row{cell, {}, {}, {}};
    try {
      const auto features = load_feature_cache(config.paths.cache_dir / cell.backend, cell.backend);
      TrainRunSpec spec;
      spec.config.variant = cell.variant;
      spec.config.vocab_size = data.vocab.size();
      spec.config.max_len = data.max_len;
      spec.config.feature_dim = features.feature_dim();
      spec.config.embed_dim = config.model.embed_dim;
      spec.config.hidden_units = config.model.hidden_units;
      spec.config.dropout_rate = config.model.dropout_rate;
      spec.epochs = cell.epochs;
      spec.batch_size = config.training.batch_size;
      spec.learning_rate = config.training.learning_rate;
      spec.repetitions = config.training.repetitions;
      spec.seed = config.training.seed;
      const auto runs = repeat_runs(spec, [&](int index, std::uint64_t seed) {
        say(cell.backend + " " + to_string(cell.variant) + " run " + std::to_string(index + 1) + " seed " +
            std::to_string(seed));
        auto trained = train_on(data, features, cell.variant, cell.epochs, config, seed);
        auto eval = evaluate_model(trained.model, test, features, data.vocab, data.max_len);
        RunScores s;
        for (std::size_t n = 0; n < 4; ++n) s.bleu[n] = eval.report.bleu[n];
        s.loss_history = trained.history.loss_history;
        return s;
      });
      row.bleu = runs.mean_bleu;
      row.runs = runs.runs;
    } catch (const std::exception& e) {
      row.error = e.what();
      say("cell " + cell.backend + " " + to_string(cell.variant) + " failed: " + row.error);
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string seeds_of(const ExperimentRow& row) {
  std::string s;
  for (const auto& r : row.runs) s += (s.empty() ? "" : ";") + std::to_string(r.seed);
  return s;
}

} // namespace

std::string render_table(const ExperimentResult& result) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "Backend" << std::setw(11) << "Variant" << std::setw(7) << "Epochs"
      << "BLEU-1  BLEU-2  BLEU-3  BLEU-4\n";
  for (const auto& r : result.rows) {
    out << std::left << std::setw(12) << r.cell.backend << std::setw(11) << to_string(r.cell.variant) << std::setw(7)
        << r.cell.epochs;
    if (r.failed()) {
      out << "FAILED: " << r.error << "\n";
      continue;
    }
    for (std::size_t n = 0; n < 4; ++n) out << fixed(r.bleu[n], 4) << (n < 3 ? "  " : "\n");
  }
  return out.str();
}

std::string experiment_csv(const ExperimentResult& result) {
  std::string out = io::csv_row({"backend", "variant", "best_epochs", "bleu_1", "bleu_2", "bleu_3", "bleu_4", "seeds", "status"});
  for (const auto& r : result.rows) {
    std::vector<std::string> f{r.cell.backend, to_string(r.cell.variant), std::to_string(r.cell.epochs)};
    for (std::size_t n = 0; n < 4; ++n) f.push_back(r.failed() ? "" : fixed(r.bleu[n], 6));
    f.push_back(seeds_of(r));
    f.push_back(r.failed() ? "failed: " + r.error : "ok");
    out += io::csv_row(f);
  }
  return out;
}

} // namespace hindicap
