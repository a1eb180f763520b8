#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hindicap/bleu.hpp"
#include "hindicap/corpus.hpp"
#include "hindicap/features.hpp"
#include "hindicap/model.hpp"

namespace hindicap {

/// Scoring tokenization, applied to candidates and references alike: cleaning, then whitespace split.
Tokens scoring_tokens(std::string_view text);

struct CaptionRow {
  std::string image_id;
  std::string candidate;
  std::vector<std::string> references;
};

struct EvaluationResult {
  BleuReport report;
  std::vector<CaptionRow> rows;
};

/// Greedy-decodes every image of `corpus` and scores against its captions (markers stripped).
/// The caller passes the split to evaluate, usually corpus.subset(Split::kTest).
EvaluationResult evaluate_model(const CaptionModel<float>& model, const Corpus& corpus, const FeatureCache& features,
                                const Vocabulary& vocab, int max_len, const BleuOptions& options = {});

/// `image_id,candidate,ref1..refN` with N = max(5, most references of any row).
std::string captions_csv(const std::vector<CaptionRow>& rows);
/// JSON with bleu_1..bleu_4, precisions, brevity_penalty and both lengths.
std::string bleu_summary_json(const BleuReport& report);

enum class ErrorCategory { kClassification, kNumbering, kColourIdentification, kGenderRecognition, kObjectOccurrence };
inline constexpr std::array<ErrorCategory, 5> kErrorCategories = {
    ErrorCategory::kClassification, ErrorCategory::kNumbering, ErrorCategory::kColourIdentification,
    ErrorCategory::kGenderRecognition, ErrorCategory::kObjectOccurrence};

std::string to_string(ErrorCategory category);
ErrorCategory parse_error_category(const std::string& name);

struct ErrorAnnotation {
  std::string image_id;
  ErrorCategory category;
  std::string note;
};

/// Reads `image_id,category,note` rows; a header row starting with `image_id` is skipped.
std::vector<ErrorAnnotation> parse_annotations_csv(const std::string& text);

struct AnnotatedReport {
  std::vector<CaptionRow> rows;
  std::map<std::string, std::set<ErrorCategory>> categories;
  std::map<std::string, std::vector<std::string>> notes;
  /// Images per category; repeated labels on one image count once.
  std::map<ErrorCategory, std::size_t> counts;
};

/// Throws ArgumentError for annotations naming images absent from `rows`.
AnnotatedReport annotate_errors(const std::vector<CaptionRow>& rows, const std::vector<ErrorAnnotation>& annotations);

/// Caption CSV with one 0/1 column per error category and a joined notes column.
std::string annotated_csv(const AnnotatedReport& report);
std::string annotation_summary_json(const AnnotatedReport& report);

} // namespace hindicap
