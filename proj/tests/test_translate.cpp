#include "support.hpp"

#include "hindicap/error.hpp"
#include "hindicap/io.hpp"
#include "hindicap/translate.hpp"

#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <thread>

using namespace hindicap;

namespace {

std::map<std::string, std::string> table() {
  return {{"a boy", "एक लड़का"}, {"a", "एक"}, {"dog", "कुत्ता"}, {"runs", "दौड़ता है"}, {"girl", "लड़की"}};
}

RetryPolicy recording(std::vector<long long>& sleeps, int attempts = 5) {
  RetryPolicy r;
  r.max_attempts = attempts;
  r.initial_backoff = std::chrono::milliseconds(500);
  r.max_backoff = std::chrono::milliseconds(1500);
  r.sleep = [&sleeps](std::chrono::milliseconds d) { sleeps.push_back(d.count()); };
  return r;
}

// Ten English lines over four images, one of them malformed.
std::string english_fixture() {
  std::string s;
  const std::vector<std::string> texts{"a boy", "a dog runs", "girl", "a girl runs", "dog", "a dog", "runs", "a boy runs", "girl runs", "a"};
  for (std::size_t i = 0; i < texts.size(); ++i)
    s += "img" + std::to_string(i / 3) + ".jpg#" + std::to_string(i % 3) + "\t" + texts[i] + "\n";
  return s + "broken line without tab\n";
}

} // namespace

TEST_CASE("dictionary client and batch contract") {
  DictionaryTranslator client(table());
  const auto out = translate_batch(client, {{"a boy"}, "en", "hi"});
  CHECK(out.texts == std::vector<std::string>{"एक लड़का"});
  CHECK(out.attempts == 1);
  const auto many = translate_batch(client, {{"a dog runs", "girl", "unknown word"}, "en", "hi"});
  CHECK(many.texts == std::vector<std::string>{"एक कुत्ता दौड़ता है", "लड़की", "unknown word"});
  CHECK_THROWS_AS(translate_batch(client, {{}, "en", "hi"}), ArgumentError);
  CHECK_THROWS_AS(translate_batch(client, {{"a"}, "english!", "hi"}), ArgumentError);
  CHECK(is_language_tag("zh-Hant"));
  CHECK_FALSE(is_language_tag(""));

  DictionaryTranslator small(table(), 2);
  try {
    translate_batch(small, {{"a", "a", "a"}, "en", "hi"});
    FAIL("expected batch too large");
  } catch (const TranslationError& e) {
    CHECK(e.kind() == TranslationErrorKind::kBatchTooLarge);
  }
}

TEST_CASE("transient errors are retried with capped exponential backoff") {
  DictionaryTranslator client(table());
  std::vector<long long> sleeps;
  client.fail_next(3, TranslationErrorKind::kTimeout);
  const auto out = translate_batch(client, {{"a"}, "en", "hi"}, recording(sleeps));
  CHECK(out.attempts == 4);
  CHECK(sleeps == std::vector<long long>{500, 1000, 1500});

  sleeps.clear();
  client.fail_next(10, TranslationErrorKind::kServer);
  try {
    translate_batch(client, {{"a"}, "en", "hi"}, recording(sleeps, 3));
    FAIL("expected exhaustion");
  } catch (const TranslationError& e) {
    CHECK(e.kind() == TranslationErrorKind::kServer);
  }
  CHECK(sleeps.size() == 2);

  for (auto kind : {TranslationErrorKind::kAuth, TranslationErrorKind::kQuota}) {
    DictionaryTranslator c(table());
    sleeps.clear();
    c.fail_next(1, kind);
    try {
      translate_batch(c, {{"a"}, "en", "hi"}, recording(sleeps));
      FAIL("expected a fatal error");
    } catch (const TranslationError& e) {
      CHECK(e.kind() == kind);
    }
    CHECK(sleeps.empty());
  }
}

TEST_CASE("empty translations surface as failed indices") {
  DictionaryTranslator client(std::map<std::string, std::string>{{"drop me", " "}});
  const auto out = translate_batch(client, {{"keep", "drop me"}, "en", "hi"});
  CHECK(out.failed_indices == std::vector<std::size_t>{1});
}

TEST_CASE("translating a token file keeps ids and resumes without repeating work") {
  test::TempDir dir;
  const auto in = dir.path() / "en.txt";
  const auto out = dir.path() / "hi.txt";
  io::write_file_atomic(in, english_fixture());

  DictionaryTranslator client(table());
  TranslateCorpusOptions opts;
  opts.batch_size = 4;
  const auto summary = translate_corpus(client, in, out, opts);
  CHECK(summary.input_lines == 10);
  CHECK(summary.translated == 10);
  CHECK(summary.malformed_input_lines == 1);
  CHECK(summary.failed.empty());
  CHECK(client.calls() == 3);

  const auto src = load_token_file(in).records;
  const auto dst = load_token_file(out).records;
  REQUIRE(dst.size() == src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    CHECK(dst[i].image_id == src[i].image_id);
    CHECK(dst[i].caption_index == src[i].caption_index);
  }
  CHECK(dst[0].text == "एक लड़का");
  const auto complete = io::read_file(out);

  const auto rerun = translate_corpus(client, in, out, opts);
  CHECK(client.calls() == 3);
  CHECK(rerun.already_translated == 10);
  CHECK(rerun.translated == 0);
  CHECK(io::read_file(out) == complete);

  // interrupted after two batches, then resumed
  const auto out2 = dir.path() / "hi2.txt";
  DictionaryTranslator flaky(table());
  flaky.fail_after(2);
  CHECK_THROWS_AS(translate_corpus(flaky, in, out2, opts), TranslationError);
  CHECK(load_token_file(out2).records.size() == 8);
  DictionaryTranslator fresh(table());
  const auto resumed = translate_corpus(fresh, in, out2, opts);
  CHECK(resumed.already_translated == 8);
  CHECK(fresh.sentences_seen() == 2);
  CHECK(io::read_file(out2) == complete);

  // a torn last line is retranslated and never merges with new output
  const auto out3 = dir.path() / "hi3.txt";
  io::write_file_atomic(out3, complete.substr(0, complete.size() - 5));
  DictionaryTranslator again(table());
  translate_corpus(again, in, out3, opts);
  CHECK(io::read_file(out3) == complete);

  // concurrent batches commit the same file
  const auto out4 = dir.path() / "hi4.txt";
  DictionaryTranslator parallel(table());
  opts.batch_size = 2;
  opts.max_inflight = 3;
  translate_corpus(parallel, in, out4, opts);
  CHECK(io::read_file(out4) == complete);
}

TEST_CASE("failed lines are reported and left out of the output") {
  test::TempDir dir;
  io::write_file_atomic(dir.path() / "en.txt", "a.jpg#0\tgood\na.jpg#1\tbad\n");
  DictionaryTranslator client({{"good", "अच्छा"}, {"bad", ""}});
  const auto summary = translate_corpus(client, dir.path() / "en.txt", dir.path() / "hi.txt");
  CHECK(summary.failed == std::vector<std::string>{"a.jpg#1"});
  CHECK(io::read_file(dir.path() / "hi.txt") == "a.jpg#0\tअच्छा\n");
}

TEST_CASE("http client speaks the v2 REST shape and maps failures") {
  httplib::Server server;
  std::string last_key, last_body;
  int mode = 0;
  server.Post("/language/translate/v2", [&](const httplib::Request& req, httplib::Response& res) {
    last_key = req.get_param_value("key");
    last_body = req.body;
    switch (mode) {
      case 1: res.status = 401; res.set_content("{}", "application/json"); return;
      case 2: res.status = 403; res.set_content(R"({"error":{"message":"Daily Limit Exceeded"}})", "application/json"); return;
      case 3: res.status = 503; return;
      case 4: res.set_content("not json", "text/plain"); return;
      default: break;
    }
    const auto q = nlohmann::json::parse(req.body).at("q");
    nlohmann::json reply;
    for (const auto& s : q) reply["data"]["translations"].push_back({{"translatedText", "हि:" + s.get<std::string>()}});
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpTranslator client({"http://127.0.0.1:" + std::to_string(port) + "/language/translate/v2", "k&y", 100,
                         std::chrono::milliseconds(5000)});
  CHECK(client.translate({"one", "two"}, "en", "hi") == std::vector<std::string>{"हि:one", "हि:two"});
  CHECK(last_key == "k&y");
  const auto body = nlohmann::json::parse(last_body);
  CHECK(body["source"] == "en");
  CHECK(body["target"] == "hi");
  CHECK(body["format"] == "text");

  auto kind_for = [&](int m) {
    mode = m;
    try {
      client.translate({"x"}, "en", "hi");
    } catch (const TranslationError& e) {
      return e.kind();
    }
    FAIL("expected an error");
    return TranslationErrorKind::kBadResponse;
  };
  CHECK(kind_for(1) == TranslationErrorKind::kAuth);
  CHECK(kind_for(2) == TranslationErrorKind::kQuota);
  CHECK(kind_for(3) == TranslationErrorKind::kServer);
  CHECK(kind_for(4) == TranslationErrorKind::kBadResponse);
  server.stop();
  thread.join();

  HttpTranslator dead({"http://127.0.0.1:" + std::to_string(port) + "/v2", "k", 100, std::chrono::milliseconds(500)});
  try {
    dead.translate({"x"}, "en", "hi");
    FAIL("expected a network error");
  } catch (const TranslationError& e) {
    CHECK(is_transient(e.kind()));
  }
  CHECK_THROWS_AS(HttpTranslator({"http://x", "", 100, std::chrono::milliseconds(1)}), TranslationError);
}
