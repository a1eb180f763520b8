#pragma once

#include "hindicap/corpus.hpp"
#include "hindicap/features.hpp"

#include <filesystem>
#include <unistd.h>
#include <random>
#include <string>
#include <vector>

namespace hindicap::test {

// Eight images, one caption each, 2 to 5 words. Vocabulary size with markers and padding is 25.
inline const std::vector<std::pair<std::string, std::string>>& fixture_captions() {
  static const std::vector<std::pair<std::string, std::string>> rows = {
      {"img1", "कुत्ता घास पर दौड़ता है"}, {"img2", "काला कुत्ता पानी में है"},
      {"img3", "लड़की घास पर बैठी है"},    {"img4", "लड़का पानी में कूदता है"},
      {"img5", "दो कुत्ते खेलते हैं"},       {"img6", "आदमी सड़क पर चलता है"},
      {"img7", "लाल गेंद"},                 {"img8", "बच्चे पानी में खेलते हैं"},
  };
  return rows;
}

/// Wrapped captions, everything in the train split.
inline Corpus fixture_corpus() {
  std::vector<CaptionRecord> records;
  for (const auto& [id, text] : fixture_captions()) records.push_back({id, 0, text});
  return wrap_corpus(clean_corpus(Corpus::from_records(records)));
}

inline FeatureCache stub_cache(const Corpus& corpus, int dim, std::uint64_t seed = 7) {
  FeatureCache cache("stub", dim);
  for (const auto& [id, caps] : corpus.entries) cache.insert(stub_extract(id, dim, seed));
  return cache;
}

/// Random Devanagari-heavy text mixing letters, matras, digits, danda, ASCII punctuation and spaces.
inline std::string random_devanagari(std::mt19937_64& rng, int max_chars = 40) {
  static const std::vector<char32_t> pool = {
      U'क', U'ख', U'ग', U'च', U'ज', U'ट', U'ड', U'त', U'द', U'न', U'प', U'ब', U'म', U'य', U'र', U'ल', U'व',
      U'स', U'ह', U'अ', U'आ', U'इ', U'ए', U'ा', U'ि', U'ी', U'ु', U'े', U'ै', U'ो', U'ं', U'़', U'्',
      U'०', U'१', U'५', U'९', U'1', U'7', U'।', U'॥', U',', U'.', U'!', U'?', U'"', U'-', U' ', U' ',
      U' ', U'\t', U' ', U'–'};
  std::uniform_int_distribution<int> len(0, max_chars);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::u32string s;
  for (int i = len(rng); i > 0; --i) s.push_back(pool[pick(rng)]);
  std::string out;
  for (char32_t c : s) {
    if (c < 0x80) {
      out += static_cast<char>(c);
    } else if (c < 0x800) {
      out += static_cast<char>(0xC0 | (c >> 6));
      out += static_cast<char>(0x80 | (c & 0x3F));
    } else {
      out += static_cast<char>(0xE0 | (c >> 12));
      out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (c & 0x3F));
    }
  }
  return out;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("hindicap_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

} // namespace hindicap::test
