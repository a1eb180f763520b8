#include "hindicap/corpus.hpp"

#include "hindicap/error.hpp"
#include "hindicap/io.hpp"
#include "hindicap/unicode.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <set>
#include <unordered_set>

namespace hindicap {

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

} // namespace

Corpus Corpus::from_records(const std::vector<CaptionRecord>& records) {
  Corpus corpus;
  for (const auto& r : records) {
    corpus.entries[r.image_id].push_back(r.text);
    corpus.split.emplace(r.image_id, Split::kTrain);
  }
  return corpus;
}

std::vector<std::string> Corpus::ids(Split which) const {
  std::vector<std::string> out;
  for (const auto& [id, s] : split)
    if (s == which) out.push_back(id);
  return out;
}

Corpus Corpus::subset(Split which) const {
  Corpus out;
  for (const auto& [id, s] : split) {
    if (s != which) continue;
    out.split.emplace(id, s);
    out.entries.emplace(id, entries.at(id));
  }
  return out;
}

std::size_t Corpus::caption_count() const {
  std::size_t n = 0;
  for (const auto& [id, caps] : entries) n += caps.size();
  return n;
}

std::size_t Corpus::min_captions_per_image() const {
  std::size_t n = entries.empty() ? 0 : SIZE_MAX;
  for (const auto& [id, caps] : entries) n = std::min(n, caps.size());
  return n;
}

TokenFileContents parse_token_lines(const std::vector<std::string>& lines) {
  TokenFileContents out;
  std::set<std::pair<std::string, int>> seen;
  for (const auto& line : lines) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const auto hash = line.rfind('#', tab);
    if (tab == std::string::npos || hash == std::string::npos || hash == 0) {
      ++out.malformed_lines;
      continue;
    }
    int k = -1;
    const char* first = line.data() + hash + 1;
    const char* last = line.data() + tab;
    auto [ptr, ec] = std::from_chars(first, last, k);
    std::string text = unicode::nfc(std::string_view(line).substr(tab + 1));
    const bool blank = unicode::split_whitespace(text).empty();
    if (ec != std::errc() || ptr != last || k < 0 || k > 4 || blank) {
      ++out.malformed_lines;
      continue;
    }
    std::string id = line.substr(0, hash);
    if (!seen.emplace(id, k).second) {
      ++out.malformed_lines;
      continue;
    }
    out.records.push_back({std::move(id), k, std::move(text)});
  }
  return out;
}

TokenFileContents load_token_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("token file not found: " + path.string());
  return parse_token_lines(io::read_lines(path));
}

std::string format_token_line(const CaptionRecord& record) {
  return record.image_id + "#" + std::to_string(record.caption_index) + "\t" + record.text;
}

std::string clean_caption(std::string_view text) {
  std::u32string kept;
  for (char32_t cp : unicode::to_u32(unicode::nfc(text))) {
    if (unicode::is_punctuation(cp) || unicode::is_decimal_digit(cp)) continue;
    kept.push_back(cp);
  }
  return unicode::nfc(join(unicode::split_whitespace(unicode::to_utf8(kept))));
}

std::string wrap_markers(std::string_view text) {
  std::string out(kStartMarker);
  const auto body = unicode::split_whitespace(text);
  if (!body.empty()) out += " " + join(body);
  out += " ";
  out += kEndMarker;
  return out;
}

std::string strip_markers(std::string_view text) {
  auto tokens = unicode::split_whitespace(text);
  if (!tokens.empty() && tokens.front() == kStartMarker) tokens.erase(tokens.begin());
  if (!tokens.empty() && tokens.back() == kEndMarker) tokens.pop_back();
  return join(tokens);
}

namespace {

template <typename Fn>
Corpus map_captions(const Corpus& corpus, Fn&& fn) {
  Corpus out = corpus;
  for (auto& [id, caps] : out.entries)
    for (auto& c : caps) c = fn(c);
  return out;
}

} // namespace

Corpus clean_corpus(const Corpus& corpus) {
  return map_captions(corpus, [](const std::string& c) { return clean_caption(c); });
}

Corpus wrap_corpus(const Corpus& corpus) {
  return map_captions(corpus, [](const std::string& c) { return wrap_markers(c); });
}

Corpus reduce_captions(const Corpus& corpus, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > corpus.min_captions_per_image())
    throw ArgumentError("captions per image must lie in [1, " +
                        std::to_string(corpus.min_captions_per_image()) + "], got " + std::to_string(k));
  Corpus out = corpus;
  for (auto& [id, caps] : out.entries) caps.resize(static_cast<std::size_t>(k));
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i) + 1).second)
      throw ArgumentError("duplicate vocabulary word: " + words_[i]);
  }
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

int Vocabulary::index_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end())
    throw VocabularyError("word not in vocabulary: " + std::string(word), std::string(word));
  return it->second;
}

const std::string& Vocabulary::word_at(int index) const {
  if (index < 1 || index > static_cast<int>(words_.size()))
    throw ArgumentError("invalid vocabulary index " + std::to_string(index));
  return words_[static_cast<std::size_t>(index) - 1];
}

Vocabulary build_vocabulary(const Corpus& corpus, int min_count) {
  std::unordered_map<std::string, int> counts;
  for (const auto& [id, caps] : corpus.entries) {
    auto s = corpus.split.find(id);
    if (s != corpus.split.end() && s->second != Split::kTrain) continue;
    for (const auto& c : caps)
      for (auto& t : unicode::split_whitespace(c)) ++counts[t];
  }
  if (counts.empty()) throw ArgumentError("cannot build a vocabulary from an empty corpus");
  if (!counts.count(std::string(kStartMarker)) || !counts.count(std::string(kEndMarker)))
    throw ArgumentError("captions must be wrapped with start/end markers before building the vocabulary");
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> words;
  for (auto& [w, n] : ranked) {
    const bool marker = w == kStartMarker || w == kEndMarker;
    if (n >= min_count || marker) words.push_back(std::move(w));
  }
  return Vocabulary(std::move(words));
}

std::size_t count_distinct_words(const Corpus& corpus) {
  std::unordered_set<std::string> words;
  for (const auto& [id, caps] : corpus.entries)
    for (const auto& c : caps)
      for (auto& t : unicode::split_whitespace(c)) words.insert(std::move(t));
  return words.size();
}

int max_caption_length(const Corpus& corpus) {
  if (corpus.caption_count() == 0) throw ArgumentError("max_caption_length of an empty corpus");
  std::size_t best = 0;
  for (const auto& [id, caps] : corpus.entries)
    for (const auto& c : caps) best = std::max(best, unicode::split_whitespace(c).size());
  return static_cast<int>(best);
}

EncodedCaption encode_caption(std::string_view text, const Vocabulary& vocab, int max_len) {
  if (vocab.words().empty()) throw ArgumentError("cannot encode with an empty vocabulary");
  const auto words = unicode::split_whitespace(text);
  if (static_cast<int>(words.size()) > max_len)
    throw ArgumentError("caption has " + std::to_string(words.size()) + " tokens, max_len is " +
                        std::to_string(max_len));
  EncodedCaption out;
  out.tokens.assign(static_cast<std::size_t>(max_len), kPaddingIndex);
  for (std::size_t i = 0; i < words.size(); ++i) out.tokens[i] = vocab.index_of(words[i]);
  out.true_length = static_cast<int>(words.size());
  return out;
}

std::string decode_tokens(const std::vector<int>& tokens, const Vocabulary& vocab, bool strip) {
  std::vector<std::string> words;
  for (int t : tokens) {
    if (t == kPaddingIndex) continue;
    const auto& w = vocab.word_at(t);
    if (strip && (w == kStartMarker || w == kEndMarker)) continue;
    words.push_back(w);
  }
  return join(words);
}

Corpus split_corpus(const Corpus& corpus, const std::vector<std::string>& train_ids,
                    const std::vector<std::string>& test_ids) {
  Corpus out;
  auto assign = [&](const std::vector<std::string>& ids, Split which) {
    for (const auto& id : ids) {
      auto it = corpus.entries.find(id);
      if (it == corpus.entries.end()) throw ArgumentError("split file references unknown image id: " + id);
      auto [pos, inserted] = out.split.emplace(id, which);
      if (!inserted && pos->second != which)
        throw ArgumentError("image id listed in both train and test splits: " + id);
      out.entries.emplace(id, it->second);
    }
  };
  assign(train_ids, Split::kTrain);
  assign(test_ids, Split::kTest);
  return out;
}

Corpus split_corpus(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ArgumentError("train fraction must lie strictly between 0 and 1");
  std::vector<std::string> ids;
  for (const auto& [id, caps] : corpus.entries) ids.push_back(id);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the order does not depend on std::shuffle internals.
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(ids[i - 1], ids[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  Corpus out;
  out.entries = corpus.entries;
  for (std::size_t i = 0; i < ids.size(); ++i) out.split[ids[i]] = i < n_train ? Split::kTrain : Split::kTest;
  return out;
}

std::vector<std::string> load_split_file(const std::filesystem::path& path) {
  std::vector<std::string> ids;
  for (auto& line : io::read_lines(path)) {
    auto tokens = unicode::split_whitespace(line);
    if (!tokens.empty()) ids.push_back(std::move(tokens.front()));
  }
  return ids;
}

void save_processed_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [id, caps] : corpus.entries)
    for (const auto& c : caps) out += id + "\t" + c + "\n";
  io::write_file_atomic(path, out);
}

Corpus load_processed_corpus(const std::filesystem::path& path) {
  Corpus corpus;
  for (const auto& line : io::read_lines(path)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IntegrityError("malformed processed-corpus line: " + line);
    const std::string id = line.substr(0, tab);
    corpus.entries[id].push_back(line.substr(tab + 1));
    corpus.split.emplace(id, Split::kTrain);
  }
  return corpus;
}

void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::string out;
  for (const auto& w : vocab.words()) out += w + "\n";
  io::write_file_atomic(path, out);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::vector<std::string> words;
  for (auto& line : io::read_lines(path))
    if (!line.empty()) words.push_back(std::move(line));
  return Vocabulary(std::move(words));
}

} // namespace hindicap
