#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hindicap {

inline constexpr std::string_view kStartMarker = "startseq";
inline constexpr std::string_view kEndMarker = "endseq";
inline constexpr int kPaddingIndex = 0;

struct CaptionRecord {
  std::string image_id;
  int caption_index = 0;
  std::string text;
};

struct TokenFileContents {
  std::vector<CaptionRecord> records;
  std::size_t malformed_lines = 0;
};

enum class Split { kTrain, kTest };

/// image_id -> captions in file order, plus the train/test partition of the ids.
struct Corpus {
  std::map<std::string, std::vector<std::string>> entries;
  std::map<std::string, Split> split;

  /// Groups records by image id; every image starts in the train split.
  static Corpus from_records(const std::vector<CaptionRecord>& records);

  std::vector<std::string> ids(Split which) const;
  /// Sub-corpus restricted to one side of the split.
  Corpus subset(Split which) const;
  std::size_t caption_count() const;
  std::size_t min_captions_per_image() const;
};

/// Parses `image_id#k<TAB>caption` lines. Text is NFC-normalized.
/// Malformed lines (no tab, no `#k`, k outside 0..4, duplicate key, empty text) are counted and skipped.
TokenFileContents load_token_file(const std::filesystem::path& path);
TokenFileContents parse_token_lines(const std::vector<std::string>& lines);
std::string format_token_line(const CaptionRecord& record);

/// Removes punctuation (P*) and decimal digits (Nd), collapses whitespace, trims.
std::string clean_caption(std::string_view text);
std::string wrap_markers(std::string_view text);
/// Inverse of wrap_markers on a single caption; leaves unwrapped text untouched.
std::string strip_markers(std::string_view text);

Corpus clean_corpus(const Corpus& corpus);
Corpus wrap_corpus(const Corpus& corpus);
/// Keeps the first k captions of every image.
Corpus reduce_captions(const Corpus& corpus, int k);

class Vocabulary {
 public:
  Vocabulary() = default;
  /// words[i] receives index i + 1.
  explicit Vocabulary(std::vector<std::string> words);

  int size() const { return static_cast<int>(words_.size()) + 1; }
  bool contains(std::string_view word) const;
  /// Throws VocabularyError for unknown words.
  int index_of(std::string_view word) const;
  /// Throws ArgumentError for 0 or out-of-range indices.
  const std::string& word_at(int index) const;
  const std::vector<std::string>& words() const { return words_; }
  int start_index() const { return index_of(kStartMarker); }
  int end_index() const { return index_of(kEndMarker); }

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

/// Indexes every whitespace token of the train split by descending frequency,
/// ties broken lexicographically. Words seen fewer than min_count times are left out.
Vocabulary build_vocabulary(const Corpus& corpus, int min_count = 1);

/// Distinct whitespace tokens over all captions, both splits.
std::size_t count_distinct_words(const Corpus& corpus);

int max_caption_length(const Corpus& corpus);

struct EncodedCaption {
  std::vector<int> tokens;
  int true_length = 0;
};

EncodedCaption encode_caption(std::string_view text, const Vocabulary& vocab, int max_len);
std::string decode_tokens(const std::vector<int>& tokens, const Vocabulary& vocab, bool strip_markers = false);

Corpus split_corpus(const Corpus& corpus, const std::vector<std::string>& train_ids,
                    const std::vector<std::string>& test_ids);
Corpus split_corpus(const Corpus& corpus, double train_fraction, std::uint64_t seed);
/// One image filename per line; blank lines ignored.
std::vector<std::string> load_split_file(const std::filesystem::path& path);

// Processed corpus: one `image_id<TAB>caption` line per caption.
void save_processed_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_processed_corpus(const std::filesystem::path& path);
// Vocabulary file: the word of index n on line n.
void save_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);

} // namespace hindicap
