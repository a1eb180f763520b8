#include "hindicap/bleu.hpp"

#include "hindicap/error.hpp"

#include <algorithm>
#include <cmath>

namespace hindicap {

NgramCounts ngram_counts(const Tokens& tokens, int n) {
  if (n < 1) throw ArgumentError("n-gram order must be >= 1");
  NgramCounts counts;
  const auto order = static_cast<std::size_t>(n);
  for (std::size_t i = 0; i + order <= tokens.size(); ++i)
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + order))];
  return counts;
}

ClippedPrecision modified_precision(const Tokens& candidate, const std::vector<Tokens>& references, int n) {
  if (references.empty()) throw ArgumentError("modified precision needs at least one reference");
  const auto cand = ngram_counts(candidate, n);
  NgramCounts max_ref;
  for (const auto& ref : references)
    for (const auto& [gram, count] : ngram_counts(ref, n)) {
      auto& slot = max_ref[gram];
      slot = std::max(slot, count);
    }
  ClippedPrecision out;
  for (const auto& [gram, count] : cand) {
    out.total += count;
    auto it = max_ref.find(gram);
    if (it != max_ref.end()) out.clipped += std::min(count, it->second);
  }
  return out;
}

double brevity_penalty(std::size_t candidate_len, std::size_t reference_len) {
  if (candidate_len == 0) return 0.0;
  if (candidate_len > reference_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(reference_len) / static_cast<double>(candidate_len));
}

std::size_t closest_reference_length(std::size_t candidate_len, const std::vector<Tokens>& references) {
  if (references.empty()) throw ArgumentError("no references");
  std::size_t best = references.front().size();
  for (const auto& r : references) {
    const auto d = [&](std::size_t len) { return len > candidate_len ? len - candidate_len : candidate_len - len; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  return best;
}

BleuReport corpus_bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                       const BleuOptions& options) {
  if (candidates.size() != references.size())
    throw ArgumentError("corpus_bleu: " + std::to_string(candidates.size()) + " candidates but " +
                        std::to_string(references.size()) + " reference sets");
  if (options.max_n < 1) throw ArgumentError("max_n must be >= 1");
  const auto max_n = static_cast<std::size_t>(options.max_n);
  BleuReport report;
  report.counts.assign(max_n, {});
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    if (references[s].empty()) throw ArgumentError("segment " + std::to_string(s) + " has no references");
    for (std::size_t n = 0; n < max_n; ++n)
      report.counts[n] += modified_precision(candidates[s], references[s], static_cast<int>(n) + 1);
    report.candidate_length += candidates[s].size();
    report.reference_length += closest_reference_length(candidates[s].size(), references[s]);
  }
  report.brevity_penalty = brevity_penalty(report.candidate_length, report.reference_length);
  double log_sum = 0;
  bool zero = false;
  for (std::size_t n = 0; n < max_n; ++n) {
    const auto& c = report.counts[n];
    double p = c.value();
    if (c.clipped == 0 && options.smoothing_epsilon)
      p = *options.smoothing_epsilon / static_cast<double>(std::max<std::uint64_t>(c.total, 1));
    report.precisions.push_back(p);
    if (p <= 0) zero = true;
    if (!zero) log_sum += std::log(p);
    report.bleu.push_back(zero ? 0.0 : report.brevity_penalty * std::exp(log_sum / static_cast<double>(n + 1)));
  }
  return report;
}

} // namespace hindicap
