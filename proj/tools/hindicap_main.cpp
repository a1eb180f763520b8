// hindicap: prepare, translate, extract, train, caption, evaluate, experiment.
// Exit codes: 0 ok, 1 usage, 2 data or runtime error, 3 experiment cell failure.

#include "hindicap/checkpoint.hpp"
#include "hindicap/decoding.hpp"
#include "hindicap/error.hpp"
#include "hindicap/evaluation.hpp"
#include "hindicap/io.hpp"
#include "hindicap/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <thread>

using namespace hindicap;
namespace fs = std::filesystem;

namespace {

template <typename T>
void override_with(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

std::map<std::string, std::string> load_dictionary(const fs::path& path) {
  std::map<std::string, std::string> table;
  for (const auto& line : io::read_lines(path)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    table[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return table;
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hindi image captioning pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON pipeline config");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "clean, split and index a token file");
  std::optional<std::string> tokens, train_split, test_split;
  std::optional<double> train_fraction;
  std::optional<std::uint64_t> split_seed;
  std::optional<int> captions_per_image, min_count;
  bool no_clean = false;
  std::string prepared_out;
  prepare->add_option("--tokens", tokens, "token file (image#k<TAB>caption)");
  prepare->add_option("--train-split", train_split);
  prepare->add_option("--test-split", test_split);
  prepare->add_option("--train-fraction", train_fraction)->check(CLI::Range(0.0, 1.0));
  prepare->add_option("--split-seed", split_seed);
  prepare->add_option("--captions-per-image", captions_per_image)->check(CLI::Range(1, 5));
  prepare->add_option("--min-count", min_count)->check(CLI::PositiveNumber);
  prepare->add_flag("--no-clean", no_clean, "keep punctuation and digits");
  prepare->add_option("--out", prepared_out, "output directory")->required();

  // translate
  auto* translate = app.add_subcommand("translate", "translate a token file, resumably");
  std::string tr_input, tr_output, dictionary;
  std::optional<std::string> endpoint, api_key_env, source_lang, target_lang;
  std::optional<std::size_t> tr_batch, tr_inflight;
  translate->add_option("--input", tr_input)->required()->check(CLI::ExistingFile);
  translate->add_option("--output", tr_output)->required();
  translate->add_option("--endpoint", endpoint);
  translate->add_option("--api-key-env", api_key_env, "environment variable holding the API key");
  translate->add_option("--source", source_lang);
  translate->add_option("--target", target_lang);
  translate->add_option("--batch-size", tr_batch)->check(CLI::PositiveNumber);
  translate->add_option("--max-inflight", tr_inflight)->check(CLI::PositiveNumber);
  translate->add_option("--dictionary", dictionary, "offline TSV dictionary instead of the HTTP service")
      ->check(CLI::ExistingFile);

  // extract
  auto* extract = app.add_subcommand("extract", "extract image features into a cache");
  std::optional<std::string> backend_flag, weights_dir;
  std::string images, cache_out;
  std::optional<int> stub_dim;
  std::optional<std::uint64_t> stub_seed;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  extract->add_option("--backend", backend_flag)->check(CLI::IsMember({"vgg16", "resnet50", "inceptionv3", "stub"}));
  extract->add_option("--images", images)->required()->check(CLI::ExistingDirectory);
  extract->add_option("--out", cache_out)->required();
  extract->add_option("--weights-dir", weights_dir);
  extract->add_option("--stub-dim", stub_dim)->check(CLI::PositiveNumber);
  extract->add_option("--stub-seed", stub_seed);
  extract->add_option("--threads", threads)->check(CLI::PositiveNumber);

  // train
  auto* train_cmd = app.add_subcommand("train", "train one model");
  std::string data_dir, features_dir, model_out, loss_csv;
  std::optional<std::string> variant_flag;
  std::optional<int> epochs, batch_size, embed_dim, hidden_units;
  std::optional<double> learning_rate, dropout;
  std::optional<std::uint64_t> seed;
  train_cmd->add_option("--data", data_dir, "prepared dataset directory")->required();
  train_cmd->add_option("--features", features_dir, "feature cache directory")->required();
  train_cmd->add_option("--variant", variant_flag)->check(CLI::IsMember({"LSTM", "BiLSTM", "AttBiLSTM"}));
  train_cmd->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--learning-rate", learning_rate);
  train_cmd->add_option("--embed-dim", embed_dim)->check(CLI::PositiveNumber);
  train_cmd->add_option("--hidden-units", hidden_units)->check(CLI::PositiveNumber);
  train_cmd->add_option("--dropout", dropout)->check(CLI::Range(0.0, 0.99));
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--out", model_out, "checkpoint path")->required();
  train_cmd->add_option("--loss-csv", loss_csv);

  // caption
  auto* caption = app.add_subcommand("caption", "caption one image");
  std::string ckpt, cap_features, image_id;
  caption->add_option("--model", ckpt)->required()->check(CLI::ExistingFile);
  caption->add_option("--features", cap_features)->required();
  caption->add_option("--image-id", image_id)->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint with corpus BLEU");
  std::string ev_model, ev_data, ev_features, ev_out, annotations, split_name = "test";
  std::optional<double> smooth;
  evaluate->add_option("--model", ev_model)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", ev_data)->required();
  evaluate->add_option("--features", ev_features)->required();
  evaluate->add_option("--out", ev_out)->required();
  evaluate->add_option("--split", split_name)->check(CLI::IsMember({"train", "test"}));
  evaluate->add_option("--annotations", annotations)->check(CLI::ExistingFile);
  evaluate->add_option("--smooth", smooth, "add-epsilon smoothing for zero n-gram counts")->check(CLI::PositiveNumber);

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run the backend x variant grid");
  std::string ex_data, ex_out, grid_text;
  std::optional<std::string> cache_dir;
  std::optional<int> repetitions, ex_batch;
  std::optional<std::uint64_t> ex_seed;
  experiment->add_option("--data", ex_data)->required();
  experiment->add_option("--cache-dir", cache_dir, "holds one feature cache per backend");
  experiment->add_option("--out", ex_out)->required();
  experiment->add_option("--grid", grid_text, "backend:variant:epochs[,...]");
  experiment->add_option("--repetitions", repetitions)->check(CLI::PositiveNumber);
  experiment->add_option("--batch-size", ex_batch)->check(CLI::PositiveNumber);
  experiment->add_option("--seed", ex_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    PipelineConfig config = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);

    if (*prepare) {
      if (tokens) config.paths.token_file = *tokens;
      if (train_split) config.paths.train_split = *train_split;
      if (test_split) config.paths.test_split = *test_split;
      override_with(train_fraction, config.corpus.train_fraction);
      override_with(split_seed, config.corpus.split_seed);
      override_with(captions_per_image, config.corpus.captions_per_image);
      override_with(min_count, config.corpus.min_count);
      if (no_clean) config.corpus.clean = false;
      if (config.paths.token_file.empty()) throw ArgumentError("--tokens is required");
      const auto file = load_token_file(config.paths.token_file);
      if (file.malformed_lines > 0) log_line("skipped " + std::to_string(file.malformed_lines) + " malformed lines");
      const auto data = prepare_corpus(Corpus::from_records(file.records), config);
      save_prepared(data, prepared_out);
      std::cout << "images " << data.corpus.entries.size() << " train " << data.corpus.ids(Split::kTrain).size()
                << " test " << data.corpus.ids(Split::kTest).size() << " vocab " << data.vocab.size() << " max_len "
                << data.max_len << "\n";
    } else if (*translate) {
      override_with(endpoint, config.translation.endpoint);
      override_with(api_key_env, config.translation.api_key_env);
      override_with(source_lang, config.translation.source_lang);
      override_with(target_lang, config.translation.target_lang);
      override_with(tr_batch, config.translation.batch_size);
      override_with(tr_inflight, config.translation.max_inflight);
      std::unique_ptr<TranslatorClient> client;
      if (!dictionary.empty()) {
        client = std::make_unique<DictionaryTranslator>(load_dictionary(dictionary), config.translation.batch_size);
      } else {
        const char* key = std::getenv(config.translation.api_key_env.c_str());
        if (!key || !*key) throw ArgumentError("set " + config.translation.api_key_env + " to the translation API key");
        client = std::make_unique<HttpTranslator>(
            HttpTranslatorConfig{config.translation.endpoint, key, config.translation.batch_size, std::chrono::seconds(30)});
      }
      TranslateCorpusOptions opts;
      opts.batch_size = config.translation.batch_size;
      opts.max_inflight = config.translation.max_inflight;
      opts.source_lang = config.translation.source_lang;
      opts.target_lang = config.translation.target_lang;
      opts.retry.max_attempts = config.translation.max_attempts;
      opts.retry.initial_backoff = std::chrono::milliseconds(config.translation.initial_backoff_ms);
      opts.retry.max_backoff = std::chrono::milliseconds(config.translation.max_backoff_ms);
      const auto summary = translate_corpus(*client, tr_input, tr_output, opts);
      std::cout << "input " << summary.input_lines << " reused " << summary.already_translated << " translated "
                << summary.translated << " failed " << summary.failed.size() << "\n";
      for (const auto& key : summary.failed) std::cerr << "failed: " << key << "\n";
      if (!summary.failed.empty()) return 2;
    } else if (*extract) {
      override_with(backend_flag, config.backend);
      if (weights_dir) config.paths.weights_dir = *weights_dir;
      override_with(stub_dim, config.stub_dim);
      override_with(stub_seed, config.stub_seed);
      auto backend = make_backend(config.backend, config.paths.weights_dir, config.stub_dim, config.stub_seed);
      const auto features = extract_directory(*backend, images, threads);
      if (features.empty()) throw ArgumentError("no .jpg/.jpeg/.png images in " + images);
      save_feature_cache(features, cache_out, backend->preprocessing());
      std::cout << "extracted " << features.size() << " features of dim " << backend->feature_dim() << "\n";
    } else if (*train_cmd) {
      if (variant_flag) config.model.variant = parse_variant(*variant_flag);
      override_with(epochs, config.training.epochs);
      override_with(batch_size, config.training.batch_size);
      override_with(learning_rate, config.training.learning_rate);
      override_with(embed_dim, config.model.embed_dim);
      override_with(hidden_units, config.model.hidden_units);
      override_with(dropout, config.model.dropout_rate);
      override_with(seed, config.training.seed);
      const auto data = load_prepared(data_dir);
      const auto features = load_feature_cache(features_dir);
      log_line("training " + to_string(config.model.variant) + " seed " + std::to_string(config.training.seed));
      auto run = train_on(data, features, config.model.variant, config.training.epochs, config, config.training.seed);
      save_checkpoint(run.model, data.vocab, model_out);
      if (!loss_csv.empty()) io::write_file_atomic(loss_csv, loss_history_csv(run.history.loss_history));
      std::cout << "final loss " << run.history.loss_history.back() << "\n";
    } else if (*caption) {
      const auto ck = load_checkpoint(ckpt);
      const auto features = load_feature_cache(cap_features, {}, ck.model.config().feature_dim);
      const auto result = greedy_caption(ck.model, features.at(image_id).vector, ck.vocab, ck.model.config().max_len);
      std::cout << result.text << "\n";
    } else if (*evaluate) {
      const auto ck = load_checkpoint(ev_model);
      const auto data = load_prepared(ev_data);
      if (!(ck.vocab == data.vocab)) throw ArgumentError("checkpoint vocabulary differs from the prepared dataset");
      const auto features = load_feature_cache(ev_features, {}, ck.model.config().feature_dim);
      BleuOptions opts;
      opts.smoothing_epsilon = smooth;
      const auto subset = data.corpus.subset(split_name == "train" ? Split::kTrain : Split::kTest);
      const auto result = evaluate_model(ck.model, subset, features, ck.vocab, ck.model.config().max_len, opts);
      fs::create_directories(ev_out);
      io::write_file_atomic(fs::path(ev_out) / "captions.csv", captions_csv(result.rows));
      io::write_file_atomic(fs::path(ev_out) / "bleu.json", bleu_summary_json(result.report));
      if (!annotations.empty()) {
        const auto report = annotate_errors(result.rows, parse_annotations_csv(io::read_file(annotations)));
        io::write_file_atomic(fs::path(ev_out) / "annotated.csv", annotated_csv(report));
        io::write_file_atomic(fs::path(ev_out) / "error_summary.json", annotation_summary_json(report));
      }
      for (std::size_t n = 0; n < result.report.bleu.size(); ++n)
        std::cout << "BLEU-" << n + 1 << " " << result.report.bleu[n] << "\n";
    } else if (*experiment) {
      if (cache_dir) config.paths.cache_dir = *cache_dir;
      override_with(repetitions, config.training.repetitions);
      override_with(ex_batch, config.training.batch_size);
      override_with(ex_seed, config.training.seed);
      if (!grid_text.empty()) config.grid = parse_grid(grid_text);
      const auto data = load_prepared(ex_data);
      const auto result = run_experiment(config, data, config.grid, log_line);
      fs::create_directories(ex_out);
      io::write_file_atomic(fs::path(ex_out) / "results.csv", experiment_csv(result));
      io::write_file_atomic(fs::path(ex_out) / "results.txt", render_table(result));
      io::write_file_atomic(fs::path(ex_out) / "config.json", config.to_json());
      std::cout << render_table(result);
      if (result.any_failed()) return 3;
    }
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
