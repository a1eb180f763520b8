// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "bleu_oracle.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

#include "hindicap/bleu.hpp"
#include "hindicap/checkpoint.hpp"
#include "hindicap/decoding.hpp"
#include "hindicap/evaluation.hpp"
#include "hindicap/io.hpp"
#include "hindicap/training.hpp"
#include "hindicap/unicode.hpp"

#include <chrono>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>

using namespace hindicap;

namespace {

// Pinned tolerances and budgets.
constexpr double kBleuTolerance = 1e-9;
constexpr double kBleuBudgetSeconds = 10.0;
constexpr double kMemorizeBleu1 = 0.95;
constexpr int kMemorizeEpochs = 200;  // must stay <= 300
constexpr double kMemorizeBudgetSeconds = 300.0;
constexpr int kTrendEpochs = 50;
constexpr double kGradientTolerance = 1e-3;
constexpr double kSumTolerance = 1e-6;
constexpr double kSingleStepTolerance = 1e-12;
constexpr int kRandomTrials = 1000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

const Variant kVariants[] = {Variant::kLstm, Variant::kBiLstm, Variant::kAttBiLstm};

struct Fixture {
  Corpus corpus = test::fixture_corpus();
  Vocabulary vocab = build_vocabulary(corpus);
  int max_len = max_caption_length(corpus);
  FeatureCache cache = test::stub_cache(corpus, 64);
};

ModelConfig fixture_config(const Fixture& f, Variant v, std::uint64_t seed) {
  ModelConfig c;
  c.variant = v;
  c.vocab_size = f.vocab.size();
  c.max_len = f.max_len;
  c.feature_dim = 64;
  c.seed = seed;  // widths and dropout stay at their defaults
  return c;
}

TrainResult train_fixture(CaptionModel<float>& model, const Fixture& f, int epochs, std::uint64_t seed) {
  BatchGenerator gen(f.corpus, f.cache, f.vocab, f.max_len, 8, seed);
  TrainOptions o;
  o.epochs = epochs;
  o.seed = seed;
  return train(model, gen, o);
}

Outcome bleu_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  const std::vector<std::string> vocab{"एक", "दो", "लाल", "गेंद", "a", "b", "c", "d"};
  std::uniform_int_distribution<int> segs(1, 10), len(0, 12), nrefs(1, 5), vsize(1, 8);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> word(0, vsize(rng) - 1);
    auto sentence = [&] {
      Tokens t(static_cast<std::size_t>(len(rng)));
      for (auto& w : t) w = vocab[static_cast<std::size_t>(word(rng))];
      return t;
    };
    std::vector<Tokens> cands;
    std::vector<std::vector<Tokens>> refs;
    for (int s = segs(rng); s > 0; --s) {
      cands.push_back(sentence());
      refs.emplace_back();
      for (int r = nrefs(rng); r > 0; --r) refs.back().push_back(sentence());
    }
    const auto got = corpus_bleu(cands, refs);
    const auto want = test::oracle_bleu(cands, refs);
    for (int n = 0; n < 4; ++n) worst = std::max(worst, std::abs(got.bleu[static_cast<std::size_t>(n)] - want.bleu[n]));
  }
  const double elapsed = seconds_since(t0);
  o.require(worst <= kBleuTolerance, "max |delta| above tolerance");
  o.require(elapsed < kBleuBudgetSeconds, "over time budget");
  o.detail << " 100 corpora, max|delta|=" << worst << ", " << elapsed << "s";
  return o;
}

Outcome papineni() {
  Outcome o;
  const Tokens cand(7, "the");
  const std::vector<Tokens> refs{{"the", "cat", "is", "on", "the", "mat"}, {"there", "is", "a", "cat", "on", "the", "mat"}};
  const auto p = modified_precision(cand, refs, 1);
  o.require(p.clipped == 2 && p.total == 7, "expected 2/7");
  o.detail << " unigram modified precision " << p.clipped << "/" << p.total;
  return o;
}

Outcome memorization() {
  Outcome o;
  const Fixture f;
  o.require(f.vocab.size() <= 25, "fixture vocabulary too large");
  for (const auto& [id, caps] : f.corpus.entries) {
    const auto n = unicode::split_whitespace(caps[0]).size();
    o.require(n >= 4 && n <= 8, "fixture caption length outside 4..8");
  }
  const auto t0 = Clock::now();
  for (auto v : kVariants) {
    auto model = CaptionModel<float>::build(fixture_config(f, v, 1));
    train_fixture(model, f, kMemorizeEpochs, 1);
    int exact = 0;
    for (const auto& [id, caps] : f.corpus.entries)
      exact += greedy_caption(model, f.cache.at(id).vector, f.vocab, f.max_len).text == strip_markers(caps[0]);
    const auto eval = evaluate_model(model, f.corpus, f.cache, f.vocab, f.max_len);
    o.require(exact == 8, to_string(v) + " did not reproduce every caption");
    o.require(eval.report.bleu[0] >= kMemorizeBleu1, to_string(v) + " BLEU-1 below threshold");
    o.detail << " " << to_string(v) << ": " << exact << "/8 exact, BLEU-1=" << eval.report.bleu[0] << ";";
  }
  const double elapsed = seconds_since(t0);
  o.require(elapsed < kMemorizeBudgetSeconds, "over time budget");
  o.detail << " " << kMemorizeEpochs << " epochs, " << elapsed << "s for all three";
  return o;
}

Outcome loss_trend() {
  Outcome o;
  const Fixture f;
  for (auto v : kVariants)
    for (std::uint64_t seed : {1, 2, 3}) {
      auto model = CaptionModel<float>::build(fixture_config(f, v, seed));
      const auto h = train_fixture(model, f, kTrendEpochs, seed).loss_history;
      const bool ok = h.size() == kTrendEpochs && h[kTrendEpochs - 1] < h[0];
      o.require(ok, to_string(v) + " seed " + std::to_string(seed));
      if (seed == 1) o.detail << " " << to_string(v) << " " << h[0] << "->" << h[kTrendEpochs - 1] << ";";
    }
  o.detail << " 3 variants x 3 seeds";
  return o;
}

Outcome gradients() {
  Outcome o;
  double worst_tensor = 0, worst_entry = 0;
  std::string worst_name;
  for (auto v : kVariants)
    for (double dropout : {0.0, 0.5}) {
      double entry = 0;
      for (const auto& [name, err] : test::tensor_errors(v, dropout, 7, entry)) {
        if (err > worst_tensor) {
          worst_tensor = err;
          worst_name = name;
        }
      }
      worst_entry = std::max(worst_entry, entry);
    }
  o.require(worst_tensor < kGradientTolerance, "tensor relative error");
  o.require(worst_entry < kGradientTolerance, "entry relative error");
  o.detail << " worst tensor " << worst_name << "=" << worst_tensor << ", worst entry=" << worst_entry;
  return o;
}

Outcome normalization() {
  Outcome o;
  std::mt19937_64 rng(31);
  double worst_step = 0;
  std::vector<CaptionModel<double>> models;
  for (auto v : kVariants) models.push_back(CaptionModel<double>::build(test::small_config(v, 0.5)));
  for (int trial = 0; trial < kRandomTrials; ++trial) {
    const auto& model = models[static_cast<std::size_t>(trial % 3)];
    const auto batch = test::random_batch<double>(model.config(), 1, rng);
    EncodedCaption prefix;
    prefix.true_length = batch.lengths[0];
    for (int t = 0; t < model.config().max_len; ++t) prefix.tokens.push_back(batch.tokens(t, 0));
    const VectorXd p = model.forward_step(batch.features.col(0), prefix);
    worst_step = std::max(worst_step, std::abs(p.sum() - 1.0));
    o.require(p.minCoeff() >= 0.0, "negative probability");
  }
  const auto att = CaptionModel<double>::build(test::small_config(Variant::kAttBiLstm)).parameters().attention;
  std::normal_distribution<double> normal;
  auto vec_of = [&](Eigen::Index n) {
    VectorXd x(n);
    for (auto& e : x) e = 3 * normal(rng);
    return x;
  };
  double worst_att = 0, worst_single = 0;
  auto vec = [&] { return vec_of(att.state_weight.cols()); };
  auto query = [&] { return vec_of(att.query_weight.cols()); };
  std::uniform_int_distribution<int> steps(1, 10);
  for (int trial = 0; trial < kRandomTrials; ++trial) {
    std::vector<VectorXd> states(static_cast<std::size_t>(steps(rng)));
    for (auto& s : states) s = vec();
    const auto r = attention_combine(att, states, query());
    worst_att = std::max(worst_att, std::abs(r.weights.sum() - 1.0));
    if (states.size() == 1) worst_single = std::max(worst_single, std::abs(r.weights(0) - 1.0));
  }
  worst_single = std::max(worst_single, std::abs(attention_combine(att, {vec()}, query()).weights(0) - 1.0));
  o.require(worst_step <= kSumTolerance, "forward_step sum");
  o.require(worst_att <= kSumTolerance, "attention sum");
  o.require(worst_single <= kSingleStepTolerance, "single-step weight");
  o.detail << " forward_step max|sum-1|=" << worst_step << ", attention max|sum-1|=" << worst_att
           << ", single-step max|w-1|=" << worst_single;
  return o;
}

Outcome preprocessing() {
  Outcome o;
  std::mt19937_64 rng(41);
  std::vector<CaptionRecord> recs;
  int idempotent = 0;
  for (int i = 0; i < kRandomTrials; ++i) {
    const auto raw = test::random_devanagari(rng);
    const auto once = clean_caption(raw);
    idempotent += clean_caption(once) == once;
    recs.push_back({"i" + std::to_string(i), 0, raw});
  }
  const auto corpus = wrap_corpus(clean_corpus(Corpus::from_records(recs)));
  const auto vocab = build_vocabulary(corpus);
  const int max_len = max_caption_length(corpus);
  int roundtrip = 0, padded = 0;
  for (const auto& [id, caps] : corpus.entries) {
    const auto e = encode_caption(caps[0], vocab, max_len);
    padded += static_cast<int>(e.tokens.size()) == max_len;
    roundtrip += decode_tokens(e.tokens, vocab) == caps[0];
  }
  // padding extension: extra trailing zeros, or junk past true_length, never change forward_step
  int invariant = 0;
  const Fixture f;
  const auto model = CaptionModel<float>::build(fixture_config(f, Variant::kAttBiLstm, 5));
  std::uniform_int_distribution<int> tok(1, f.vocab.size() - 1), len(1, f.max_len), extra(1, 20);
  for (int i = 0; i < kRandomTrials / 10; ++i) {
    EncodedCaption p;
    p.true_length = len(rng);
    for (int t = 0; t < f.max_len; ++t) p.tokens.push_back(t < p.true_length ? tok(rng) : 0);
    const VectorXf feature = stub_extract("p" + std::to_string(i), 64, 9).vector;
    const VectorXf base = model.forward_step(feature, p);
    auto longer = p;
    longer.tokens.resize(longer.tokens.size() + static_cast<std::size_t>(extra(rng)), 0);
    auto junk = p;
    for (auto k = static_cast<std::size_t>(p.true_length); k < junk.tokens.size(); ++k) junk.tokens[k] = tok(rng);
    invariant += model.forward_step(feature, longer) == base && model.forward_step(feature, junk) == base;
  }
  const int n = static_cast<int>(corpus.entries.size());
  o.require(idempotent == kRandomTrials, "idempotence");
  o.require(roundtrip == n, "roundtrip");
  o.require(padded == n, "padded length");
  o.require(invariant == kRandomTrials / 10, "padding extension");
  o.detail << " idempotent " << idempotent << "/" << kRandomTrials << ", roundtrip " << roundtrip << "/" << n
           << ", padded " << padded << "/" << n << ", padding-invariant " << invariant << "/" << kRandomTrials / 10;
  return o;
}

Outcome determinism() {
  Outcome o;
  const Fixture f;
  std::vector<std::vector<double>> histories;
  std::vector<std::vector<std::string>> captions;
  std::vector<CaptionModel<float>> models;
  for (int run = 0; run < 2; ++run) {
    auto model = CaptionModel<float>::build(fixture_config(f, Variant::kAttBiLstm, 42));
    histories.push_back(train_fixture(model, f, 20, 42).loss_history);
    captions.emplace_back();
    for (const auto& [id, caps] : f.corpus.entries)
      captions.back().push_back(greedy_caption(model, f.cache.at(id).vector, f.vocab, f.max_len).text);
    models.push_back(std::move(model));
  }
  o.require(histories[0] == histories[1], "loss histories differ");
  o.require(captions[0] == captions[1], "decoded captions differ");

  test::TempDir dir;
  save_checkpoint(models[0], f.vocab, dir.path() / "m.ckpt");
  const auto back = load_checkpoint(dir.path() / "m.ckpt");
  bool same = back.model.config() == models[0].config() && back.vocab == f.vocab;
  std::vector<MatrixXf> a, b;
  models[0].parameters().for_each([&](const char*, const auto& t) { a.push_back(t); });
  back.model.parameters().for_each([&](const char*, const auto& t) { b.push_back(t); });
  same = same && a.size() == b.size();
  for (std::size_t i = 0; same && i < a.size(); ++i)
    same = a[i].size() == b[i].size() &&
           std::memcmp(a[i].data(), b[i].data(), sizeof(float) * static_cast<std::size_t>(a[i].size())) == 0;
  o.require(same, "checkpoint roundtrip");

  save_feature_cache(f.cache, dir.path() / "cache");
  const auto cache = load_feature_cache(dir.path() / "cache", "stub", 64);
  bool cache_same = cache.size() == f.cache.size();
  for (const auto& [id, feat] : f.cache.items())
    cache_same = cache_same && std::memcmp(cache.at(id).vector.data(), feat.vector.data(), 64 * sizeof(float)) == 0;
  o.require(cache_same, "feature cache roundtrip");
  o.detail << " 2 runs x 20 epochs identical; checkpoint " << (same ? "bit-exact" : "differs") << "; cache "
           << (cache_same ? "bit-exact" : "differs");
  return o;
}

Outcome sample_count() {
  Outcome o;
  std::mt19937_64 rng(51);
  const std::vector<std::string> words{"क", "ख", "ग", "घ", "च", "छ", "ज"};
  std::uniform_int_distribution<int> nwords(0, 15), ncaps(1, 5), pick(0, 6);
  std::vector<CaptionRecord> recs;
  std::size_t expected = 0;
  for (int i = 0; i < 150; ++i)
    for (int k = 0, n = ncaps(rng); k < n; ++k) {
      std::string text;
      const int w = nwords(rng);
      for (int j = 0; j < w; ++j) text += (j ? " " : "") + words[static_cast<std::size_t>(pick(rng))];
      expected += static_cast<std::size_t>(w + 2 - 1);  // L = words + two markers
      recs.push_back({"img" + std::to_string(i), k, text});
    }
  const auto corpus = wrap_corpus(Corpus::from_records(recs));
  const auto vocab = build_vocabulary(corpus);
  const auto cache = test::stub_cache(corpus, 4);
  BatchGenerator gen(corpus, cache, vocab, max_caption_length(corpus), 32, 3);
  gen.start_epoch(0);
  std::size_t emitted = 0;
  while (auto b = gen.next()) emitted += b->size();
  o.require(emitted == expected, "count mismatch");
  o.require(gen.residency().peak() <= 2 * 32, "resident samples above bound");
  o.detail << " emitted " << emitted << ", expected " << expected << ", peak resident " << gen.residency().peak();
  return o;
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 BLEU oracle equivalence", bleu_oracle},
      {"2 Papineni worked example", papineni},
      {"3 Memorization on the 8-image fixture", memorization},
      {"4 Loss trend by epoch 50", loss_trend},
      {"5 Gradient checks", gradients},
      {"6 Normalization invariants", normalization},
      {"7 Preprocessing properties", preprocessing},
      {"8 Determinism and persistence", determinism},
      {"9 Sample-expansion count", sample_count},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome out;
    try {
      out = check();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << " [exception: " << e.what() << "]";
    }
    failures += !out.pass;
    std::cout << (out.pass ? "PASS " : "FAIL ") << name << ":" << out.detail.str() << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
