#include "support.hpp"

#include "hindicap/decoding.hpp"
#include "hindicap/error.hpp"

#include <doctest.h>

using namespace hindicap;

namespace {

struct Rig {
  Vocabulary vocab{{"startseq", "endseq", "क", "ख", "ग"}};
  CaptionModel<float> model;

  explicit Rig(Variant v = Variant::kLstm) {
    ModelConfig c;
    c.variant = v;
    c.vocab_size = vocab.size();
    c.max_len = 6;
    c.feature_dim = 4;
    c.embed_dim = 4;
    c.hidden_units = 4;
    c.seed = 2;
    model = CaptionModel<float>::build(c);
  }

  // Output logits become constant: `bias` per word, independent of the input.
  void force(const std::vector<float>& bias) {
    auto& out = model.parameters().output;
    out.weight.setZero();
    for (std::size_t i = 0; i < bias.size(); ++i) out.bias(static_cast<Eigen::Index>(i)) = bias[i];
  }
};

} // namespace

TEST_CASE("endseq first gives an empty caption") {
  Rig rig;
  rig.force({0, 0, 50, 0, 0, 0});
  const auto r = greedy_caption(rig.model, VectorXf::Ones(4), rig.vocab, 6);
  CHECK(r.text == "");
  CHECK(r.token_count == 0);
  CHECK(r.stop_reason == StopReason::kEndMarker);
  CHECK(to_string(r.stop_reason) == "endseq");
}

TEST_CASE("never choosing endseq stops at max_len with max_len - 1 words") {
  Rig rig;
  rig.force({0, 0, 0, 0, 50, 0});
  const auto r = greedy_caption(rig.model, VectorXf::Ones(4), rig.vocab, 6);
  CHECK(r.text == "ख ख ख ख ख");
  CHECK(r.token_count == 5);
  CHECK(r.stop_reason == StopReason::kMaxLength);
  CHECK(to_string(r.stop_reason) == "max_len");
}

TEST_CASE("padding and startseq are never chosen and ties go to the lowest index") {
  Rig rig;
  rig.force({90, 90, 0, 0, 0, 0});
  // remaining words tie; endseq (index 2) is the lowest eligible
  auto r = greedy_caption(rig.model, VectorXf::Ones(4), rig.vocab, 6);
  CHECK(r.token_count == 0);
  CHECK(r.stop_reason == StopReason::kEndMarker);
  rig.force({90, 90, -1, 3, 3, 3});
  r = greedy_caption(rig.model, VectorXf::Ones(4), rig.vocab, 6);
  CHECK(r.text == "क क क क क");
}

TEST_CASE("batched decoding equals one-by-one decoding and is deterministic") {
  for (auto v : {Variant::kLstm, Variant::kBiLstm, Variant::kAttBiLstm}) {
    Rig rig(v);
    std::mt19937_64 rng(4);
    std::normal_distribution<float> normal;
    std::vector<VectorXf> feats;
    for (int i = 0; i < 12; ++i) {
      VectorXf f(4);
      for (auto& x : f) x = 3 * normal(rng);
      feats.push_back(f);
    }
    // make endseq plausible so lengths vary
    rig.model.parameters().output.bias(2) += 0.5f;
    const auto batch = greedy_caption_batch(rig.model, feats, rig.vocab, 6);
    for (std::size_t i = 0; i < feats.size(); ++i) {
      const auto one = greedy_caption(rig.model, feats[i], rig.vocab, 6);
      CHECK(one.text == batch[i].text);
      CHECK(one.token_count == batch[i].token_count);
      CHECK(one.stop_reason == batch[i].stop_reason);
      CHECK(one.token_count <= 5);
      CHECK(one.text.find("startseq") == std::string::npos);
      CHECK(one.text.find("endseq") == std::string::npos);
    }
    const auto again = greedy_caption_batch(rig.model, feats, rig.vocab, 6);
    for (std::size_t i = 0; i < feats.size(); ++i) CHECK(again[i].text == batch[i].text);
  }
}

TEST_CASE("decoding input checks") {
  Rig rig;
  CHECK_THROWS_AS(greedy_caption(rig.model, VectorXf::Ones(3), rig.vocab, 6), DimensionError);
  CHECK_THROWS_AS(greedy_caption(rig.model, VectorXf::Ones(4), Vocabulary({"startseq", "endseq"}), 6), DimensionError);
  CHECK_THROWS_AS(greedy_caption(rig.model, VectorXf::Ones(4), rig.vocab, 7), ArgumentError);
}
