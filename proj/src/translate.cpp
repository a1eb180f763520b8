#include "hindicap/translate.hpp"

#include "hindicap/corpus.hpp"
#include "hindicap/io.hpp"
#include "hindicap/unicode.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <future>
#include <regex>
#include <thread>
#include <unordered_map>

namespace hindicap {

std::string to_string(TranslationErrorKind kind) {
  switch (kind) {
    case TranslationErrorKind::kAuth: return "auth failure";
    case TranslationErrorKind::kQuota: return "quota exceeded";
    case TranslationErrorKind::kTimeout: return "network timeout";
    case TranslationErrorKind::kNetwork: return "network error";
    case TranslationErrorKind::kServer: return "server error";
    case TranslationErrorKind::kBadResponse: return "bad response";
    case TranslationErrorKind::kBatchTooLarge: return "batch too large";
  }
  return "unknown";
}

bool is_transient(TranslationErrorKind kind) {
  return kind == TranslationErrorKind::kTimeout || kind == TranslationErrorKind::kNetwork ||
         kind == TranslationErrorKind::kServer;
}

bool is_language_tag(const std::string& tag) {
  static const std::regex pattern("^[A-Za-z]{2,3}(-[A-Za-z0-9]{2,8})*$");
  return std::regex_match(tag, pattern);
}

DictionaryTranslator::DictionaryTranslator(std::map<std::string, std::string> table, std::size_t max_batch)
    : table_(std::move(table)), max_batch_(max_batch) {}

void DictionaryTranslator::fail_next(std::size_t count, TranslationErrorKind kind) {
  std::lock_guard lock(mutex_);
  pending_failures_ = count;
  failure_kind_ = kind;
}

void DictionaryTranslator::fail_after(std::size_t calls) {
  std::lock_guard lock(mutex_);
  fail_after_ = calls;
}

std::vector<std::string> DictionaryTranslator::translate(const std::vector<std::string>& sentences,
                                                         const std::string&, const std::string&) {
  {
    std::lock_guard lock(mutex_);
    if (pending_failures_ > 0) {
      --pending_failures_;
      throw TranslationError(failure_kind_, "injected failure");
    }
    if (calls_.load() >= fail_after_) throw TranslationError(TranslationErrorKind::kAuth, "injected stop");
  }
  ++calls_;
  sentences_seen_ += sentences.size();
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    if (auto it = table_.find(s); it != table_.end()) {
      out.push_back(it->second);
      continue;
    }
    std::string translated;
    for (const auto& word : unicode::split_whitespace(s)) {
      if (!translated.empty()) translated += ' ';
      auto it = table_.find(word);
      translated += it != table_.end() ? it->second : word;
    }
    out.push_back(std::move(translated));
  }
  return out;
}

HttpTranslator::HttpTranslator(HttpTranslatorConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ArgumentError("translation endpoint URL is empty");
  if (config_.api_key.empty()) throw TranslationError(TranslationErrorKind::kAuth, "no API key configured");
}

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, pattern)) throw ArgumentError("malformed endpoint URL: " + url);
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

TranslationErrorKind classify_status(int status, const std::string& body) {
  if (status == 429) return TranslationErrorKind::kQuota;
  if (status == 403 && (body.find("Limit") != std::string::npos || body.find("quota") != std::string::npos))
    return TranslationErrorKind::kQuota;
  if (status == 401 || status == 403) return TranslationErrorKind::kAuth;
  if (status >= 500) return TranslationErrorKind::kServer;
  return TranslationErrorKind::kBadResponse;
}

} // namespace

std::vector<std::string> HttpTranslator::translate(const std::vector<std::string>& sentences,
                                                   const std::string& source_lang, const std::string& target_lang) {
  const auto url = parse_url(config_.endpoint);
  httplib::Client client(url.origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  nlohmann::json body = {{"q", sentences}, {"source", source_lang}, {"target", target_lang}, {"format", "text"}};
  const std::string path = url.path + "?key=" + httplib::detail::encode_query_param(config_.api_key);
  auto result = client.Post(path, body.dump(), "application/json; charset=utf-8");
  if (!result) {
    const auto err = result.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout)
      throw TranslationError(TranslationErrorKind::kTimeout, httplib::to_string(err));
    throw TranslationError(TranslationErrorKind::kNetwork, httplib::to_string(err));
  }
  if (result->status != 200)
    throw TranslationError(classify_status(result->status, result->body),
                           "HTTP " + std::to_string(result->status));
  std::vector<std::string> out;
  try {
    const auto reply = nlohmann::json::parse(result->body);
    for (const auto& t : reply.at("data").at("translations")) out.push_back(t.at("translatedText").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw TranslationError(TranslationErrorKind::kBadResponse, e.what());
  }
  if (out.size() != sentences.size())
    throw TranslationError(TranslationErrorKind::kBadResponse,
                           "expected " + std::to_string(sentences.size()) + " translations, got " +
                               std::to_string(out.size()));
  return out;
}

BatchTranslation translate_batch(TranslatorClient& client, const TranslationRequest& request,
                                 const RetryPolicy& retry) {
  if (request.sentences.empty()) throw ArgumentError("translation request has no sentences");
  if (!is_language_tag(request.source_lang) || !is_language_tag(request.target_lang))
    throw ArgumentError("malformed language tag");
  if (request.sentences.size() > client.max_batch_size())
    throw TranslationError(TranslationErrorKind::kBatchTooLarge,
                           std::to_string(request.sentences.size()) + " sentences exceed the client limit of " +
                               std::to_string(client.max_batch_size()));
  auto sleep = retry.sleep ? retry.sleep : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  BatchTranslation out;
  double backoff = static_cast<double>(retry.initial_backoff.count());
  for (;;) {
    ++out.attempts;
    try {
      out.texts = client.translate(request.sentences, request.source_lang, request.target_lang);
      break;
    } catch (const TranslationError& e) {
      if (!is_transient(e.kind()) || out.attempts >= retry.max_attempts) throw;
    }
    sleep(std::chrono::milliseconds(static_cast<long long>(backoff)));
    backoff = std::min(backoff * retry.multiplier, static_cast<double>(retry.max_backoff.count()));
  }
  if (out.texts.size() != request.sentences.size())
    throw TranslationError(TranslationErrorKind::kBadResponse, "client returned a different number of sentences");
  for (std::size_t i = 0; i < out.texts.size(); ++i)
    if (unicode::split_whitespace(out.texts[i]).empty()) out.failed_indices.push_back(i);
  return out;
}

namespace {

std::string record_key(const CaptionRecord& r) { return r.image_id + "#" + std::to_string(r.caption_index); }

} // namespace

TranslationSummary translate_corpus(TranslatorClient& client, const std::filesystem::path& input,
                                    const std::filesystem::path& output, const TranslateCorpusOptions& options) {
  if (options.batch_size == 0 || options.max_inflight == 0) throw ArgumentError("batch size and inflight must be >= 1");
  const auto source = load_token_file(input);
  TranslationSummary summary;
  summary.input_lines = source.records.size();
  summary.malformed_input_lines = source.malformed_lines;

  // Resume: anything already in the output counts as done. A torn final line fails
  // to parse and is simply retranslated.
  std::unordered_map<std::string, std::string> done;
  if (std::filesystem::exists(output)) {
    std::string existing = io::read_file(output);
    if (!existing.empty() && existing.back() != '\n') {
      const auto nl = existing.rfind('\n');
      existing.resize(nl == std::string::npos ? 0 : nl + 1);
      // drop the torn tail on disk too, so appended lines start clean
      io::write_file_atomic(output, existing);
    }
    std::vector<std::string> lines;
    std::size_t start = 0;
    for (std::size_t nl; (nl = existing.find('\n', start)) != std::string::npos; start = nl + 1)
      lines.push_back(existing.substr(start, nl - start));
    for (auto& r : parse_token_lines(lines).records) done.emplace(record_key(r), std::move(r.text));
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < source.records.size(); ++i) {
    if (done.count(record_key(source.records[i])))
      ++summary.already_translated;
    else
      pending.push_back(i);
  }

  const std::size_t batch = std::min(options.batch_size, client.max_batch_size());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < pending.size(); i += batch)
    batches.emplace_back(pending.begin() + static_cast<std::ptrdiff_t>(i),
                         pending.begin() + static_cast<std::ptrdiff_t>(std::min(pending.size(), i + batch)));

  if (!batches.empty()) {
    if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
    std::ofstream progress(output, std::ios::binary | std::ios::app);
    if (!progress) throw LoadError("cannot write " + output.string());

    auto run_batch = [&](const std::vector<std::size_t>& indices) {
      TranslationRequest req{{}, options.source_lang, options.target_lang};
      for (auto i : indices) req.sentences.push_back(source.records[i].text);
      return translate_batch(client, req, options.retry);
    };
    // Batches are dispatched in waves of max_inflight and committed in order.
    for (std::size_t wave = 0; wave < batches.size(); wave += options.max_inflight) {
      const std::size_t end = std::min(batches.size(), wave + options.max_inflight);
      std::vector<std::future<BatchTranslation>> futures;
      for (std::size_t b = wave; b < end; ++b)
        futures.push_back(std::async(options.max_inflight > 1 ? std::launch::async : std::launch::deferred,
                                     run_batch, std::cref(batches[b])));
      std::exception_ptr failure;
      for (std::size_t b = wave; b < end; ++b) {
        BatchTranslation result;
        try {
          result = futures[b - wave].get();
        } catch (...) {
          if (!failure) failure = std::current_exception();
          continue;
        }
        if (failure) continue;
        const auto& indices = batches[b];
        std::vector<bool> bad(indices.size(), false);
        for (auto f : result.failed_indices) bad[f] = true;
        for (std::size_t k = 0; k < indices.size(); ++k) {
          const auto& rec = source.records[indices[k]];
          if (bad[k]) {
            summary.failed.push_back(record_key(rec));
            continue;
          }
          CaptionRecord translated{rec.image_id, rec.caption_index, unicode::nfc(result.texts[k])};
          // Translations are single-line by construction of the token format.
          std::replace(translated.text.begin(), translated.text.end(), '\n', ' ');
          std::replace(translated.text.begin(), translated.text.end(), '\t', ' ');
          progress << format_token_line(translated) << '\n';
          done.emplace(record_key(rec), translated.text);
          ++summary.translated;
        }
        progress.flush();
      }
      if (failure) std::rethrow_exception(failure);
    }
  }

  std::string final_text;
  for (const auto& r : source.records) {
    auto it = done.find(record_key(r));
    if (it != done.end()) final_text += format_token_line({r.image_id, r.caption_index, it->second}) + "\n";
  }
  io::write_file_atomic(output, final_text);
  return summary;
}

} // namespace hindicap
