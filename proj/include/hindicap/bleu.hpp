#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hindicap {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<Tokens, std::size_t>;

/// Sliding-window n-grams of `tokens`. Throws ArgumentError for n < 1.
NgramCounts ngram_counts(const Tokens& tokens, int n);

/// Clipped match count over total candidate n-grams, kept exact for corpus aggregation.
struct ClippedPrecision {
  std::uint64_t clipped = 0;
  std::uint64_t total = 0;

  double value() const { return total == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(total); }
  ClippedPrecision& operator+=(const ClippedPrecision& o) {
    clipped += o.clipped;
    total += o.total;
    return *this;
  }
};

/// Each candidate n-gram counts at most its largest count in any single reference.
ClippedPrecision modified_precision(const Tokens& candidate, const std::vector<Tokens>& references, int n);

/// 1 when candidate_len > reference_len, exp(1 - r/c) otherwise, 0 for an empty candidate.
double brevity_penalty(std::size_t candidate_len, std::size_t reference_len);

/// Length of the reference closest to `candidate_len`; ties go to the shorter reference.
std::size_t closest_reference_length(std::size_t candidate_len, const std::vector<Tokens>& references);

struct BleuOptions {
  int max_n = 4;
  /// When set, a zero clipped count contributes epsilon / total instead of zeroing the score.
  std::optional<double> smoothing_epsilon;
};

struct BleuReport {
  std::vector<double> bleu;        // cumulative BLEU-1..max_n
  std::vector<double> precisions;  // individual order precisions, diagnostics only
  std::vector<ClippedPrecision> counts;
  double brevity_penalty = 0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

/// Corpus-level BLEU: clipped counts and lengths are summed over segments before dividing.
BleuReport corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                       const BleuOptions& options = {});

} // namespace hindicap
