#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "hindicap/error.hpp"

namespace hindicap {

enum class TranslationErrorKind { kAuth, kQuota, kTimeout, kNetwork, kServer, kBadResponse, kBatchTooLarge };

std::string to_string(TranslationErrorKind kind);
bool is_transient(TranslationErrorKind kind);

class TranslationError : public Error {
 public:
  TranslationError(TranslationErrorKind kind, const std::string& what)
      : Error(to_string(kind) + ": " + what), kind_(kind) {}
  TranslationErrorKind kind() const { return kind_; }

 private:
  TranslationErrorKind kind_;
};

struct TranslationRequest {
  std::vector<std::string> sentences;
  std::string source_lang = "en";
  std::string target_lang = "hi";
};

/// BCP-47-style tag: a 2-3 letter primary subtag, then 2-8 alphanumeric subtags.
bool is_language_tag(const std::string& tag);

/// Implementations must return exactly one output per input, in order, and be callable from several threads.
class TranslatorClient {
 public:
  virtual ~TranslatorClient() = default;
  virtual std::vector<std::string> translate(const std::vector<std::string>& sentences,
                                             const std::string& source_lang,
                                             const std::string& target_lang) = 0;
  virtual std::size_t max_batch_size() const = 0;
};

/// Offline client backed by a lookup table. Whole-sentence entries win; otherwise
/// each word is looked up and unknown words pass through unchanged.
class DictionaryTranslator : public TranslatorClient {
 public:
  explicit DictionaryTranslator(std::map<std::string, std::string> table, std::size_t max_batch = 100);

  std::vector<std::string> translate(const std::vector<std::string>& sentences, const std::string& source_lang,
                                     const std::string& target_lang) override;
  std::size_t max_batch_size() const override { return max_batch_; }

  std::size_t calls() const { return calls_.load(); }
  std::size_t sentences_seen() const { return sentences_seen_.load(); }
  /// The next `count` calls throw `kind` instead of translating.
  void fail_next(std::size_t count, TranslationErrorKind kind);
  /// Every call after `calls` successful ones throws kAuth; simulates an interrupted run.
  void fail_after(std::size_t calls);

 private:
  std::map<std::string, std::string> table_;
  std::size_t max_batch_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> sentences_seen_{0};
  std::mutex mutex_;
  std::size_t pending_failures_ = 0;
  TranslationErrorKind failure_kind_ = TranslationErrorKind::kNetwork;
  std::size_t fail_after_ = SIZE_MAX;
};

struct HttpTranslatorConfig {
  /// e.g. https://translation.googleapis.com/language/translate/v2
  std::string endpoint;
  std::string api_key;
  std::size_t max_batch = 100;
  std::chrono::milliseconds timeout{30000};
};

/// Speaks the cloud-translation v2 REST shape: POST {q:[...], source, target, format:"text"}
/// with `?key=`, reply {data:{translations:[{translatedText}]}}.
class HttpTranslator : public TranslatorClient {
 public:
  explicit HttpTranslator(HttpTranslatorConfig config);
  std::vector<std::string> translate(const std::vector<std::string>& sentences, const std::string& source_lang,
                                     const std::string& target_lang) override;
  std::size_t max_batch_size() const override { return config_.max_batch; }

 private:
  HttpTranslatorConfig config_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{30000};
  /// Replaced in tests to avoid real sleeping.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct BatchTranslation {
  std::vector<std::string> texts;
  /// Positions whose translation came back empty.
  std::vector<std::size_t> failed_indices;
  int attempts = 0;
};

/// One client call with retries on transient errors. Non-transient errors and exhausted retries throw.
BatchTranslation translate_batch(TranslatorClient& client, const TranslationRequest& request,
                                 const RetryPolicy& retry = {});

struct TranslateCorpusOptions {
  std::size_t batch_size = 100;
  std::size_t max_inflight = 1;
  std::string source_lang = "en";
  std::string target_lang = "hi";
  RetryPolicy retry;
};

struct TranslationSummary {
  std::size_t input_lines = 0;
  std::size_t already_translated = 0;
  std::size_t translated = 0;
  std::size_t malformed_input_lines = 0;
  /// `image_id#k` keys whose translation failed.
  std::vector<std::string> failed;
};

/// Translates a token file into `output`, keeping ids and caption indices. Lines already
/// present in `output` are reused, so an interrupted run can be resumed. Progress is
/// appended per batch; the final file is rewritten atomically in input order.
TranslationSummary translate_corpus(TranslatorClient& client, const std::filesystem::path& input,
                                    const std::filesystem::path& output, const TranslateCorpusOptions& options = {});

} // namespace hindicap
