#include "hindicap/evaluation.hpp"

#include "hindicap/decoding.hpp"
#include "hindicap/error.hpp"
#include "hindicap/io.hpp"
#include "hindicap/unicode.hpp"

#include <json.hpp>

#include <algorithm>

namespace hindicap {

Tokens scoring_tokens(std::string_view text) { return unicode::split_whitespace(clean_caption(text)); }

EvaluationResult evaluate_model(const CaptionModel<float>& model, const Corpus& corpus, const FeatureCache& features,
                                const Vocabulary& vocab, int max_len, const BleuOptions& options) {
  if (corpus.entries.empty()) throw ArgumentError("evaluation set is empty");
  EvaluationResult out;
  std::vector<std::string> ids;
  std::vector<VectorXf> vectors;
  for (const auto& [id, caps] : corpus.entries) {
    ids.push_back(id);
    vectors.push_back(features.at(id).vector);
  }
  std::vector<DecodeResult> decoded;
  constexpr std::size_t kChunk = 64;
  for (std::size_t i = 0; i < vectors.size(); i += kChunk) {
    std::vector<VectorXf> chunk(vectors.begin() + static_cast<std::ptrdiff_t>(i),
                                vectors.begin() + static_cast<std::ptrdiff_t>(std::min(vectors.size(), i + kChunk)));
    auto part = greedy_caption_batch(model, chunk, vocab, max_len);
    decoded.insert(decoded.end(), part.begin(), part.end());
  }
  std::vector<Tokens> candidates;
  std::vector<std::vector<Tokens>> references;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CaptionRow row{ids[i], decoded[i].text, {}};
    std::vector<Tokens> refs;
    for (const auto& c : corpus.entries.at(ids[i])) {
      row.references.push_back(strip_markers(c));
      refs.push_back(scoring_tokens(row.references.back()));
    }
    candidates.push_back(scoring_tokens(row.candidate));
    references.push_back(std::move(refs));
    out.rows.push_back(std::move(row));
  }
  out.report = corpus_bleu(candidates, references, options);
  return out;
}

namespace {

std::size_t reference_columns(const std::vector<CaptionRow>& rows) {
  std::size_t n = 5;
  for (const auto& r : rows) n = std::max(n, r.references.size());
  return n;
}

std::vector<std::string> caption_header(std::size_t refs) {
  std::vector<std::string> h{"image_id", "candidate"};
  for (std::size_t i = 1; i <= refs; ++i) h.push_back("ref" + std::to_string(i));
  return h;
}

std::vector<std::string> caption_fields(const CaptionRow& row, std::size_t refs) {
  std::vector<std::string> f{row.image_id, row.candidate};
  for (std::size_t i = 0; i < refs; ++i) f.push_back(i < row.references.size() ? row.references[i] : "");
  return f;
}

} // namespace

std::string captions_csv(const std::vector<CaptionRow>& rows) {
  const auto refs = reference_columns(rows);
  std::string out = io::csv_row(caption_header(refs));
  for (const auto& r : rows) out += io::csv_row(caption_fields(r, refs));
  return out;
}

std::string bleu_summary_json(const BleuReport& report) {
  nlohmann::json j;
  for (std::size_t n = 0; n < report.bleu.size(); ++n) j["bleu_" + std::to_string(n + 1)] = report.bleu[n];
  j["precisions"] = report.precisions;
  j["brevity_penalty"] = report.brevity_penalty;
  j["candidate_length"] = report.candidate_length;
  j["reference_length"] = report.reference_length;
  return j.dump(2) + "\n";
}

std::string to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kClassification: return "classification";
    case ErrorCategory::kNumbering: return "numbering";
    case ErrorCategory::kColourIdentification: return "colour_identification";
    case ErrorCategory::kGenderRecognition: return "gender_recognition";
    case ErrorCategory::kObjectOccurrence: return "object_occurrence";
  }
  return "?";
}

ErrorCategory parse_error_category(const std::string& name) {
  for (auto c : kErrorCategories)
    if (to_string(c) == name) return c;
  throw ArgumentError("unknown error category: " + name);
}

std::vector<ErrorAnnotation> parse_annotations_csv(const std::string& text) {
  std::vector<ErrorAnnotation> out;
  for (const auto& row : io::csv_parse(text)) {
    if (row.empty() || (row.size() == 1 && row[0].empty())) continue;
    if (row[0] == "image_id") continue;
    if (row.size() < 2) throw ArgumentError("annotation row needs image_id and category");
    out.push_back({row[0], parse_error_category(row[1]), row.size() > 2 ? row[2] : ""});
  }
  return out;
}

AnnotatedReport annotate_errors(const std::vector<CaptionRow>& rows, const std::vector<ErrorAnnotation>& annotations) {
  AnnotatedReport out;
  out.rows = rows;
  std::set<std::string> known;
  for (const auto& r : rows) known.insert(r.image_id);
  for (const auto& a : annotations) {
    if (!known.count(a.image_id)) throw ArgumentError("annotation refers to unknown image " + a.image_id);
    if (out.categories[a.image_id].insert(a.category).second) ++out.counts[a.category];
    if (!a.note.empty()) out.notes[a.image_id].push_back(a.note);
  }
  for (auto c : kErrorCategories) out.counts.emplace(c, 0);
  return out;
}

std::string annotated_csv(const AnnotatedReport& report) {
  const auto refs = reference_columns(report.rows);
  auto header = caption_header(refs);
  for (auto c : kErrorCategories) header.push_back(to_string(c));
  header.push_back("notes");
  std::string out = io::csv_row(header);
  for (const auto& r : report.rows) {
    auto fields = caption_fields(r, refs);
    const auto cats = report.categories.find(r.image_id);
    for (auto c : kErrorCategories)
      fields.push_back(cats != report.categories.end() && cats->second.count(c) ? "1" : "0");
    std::string notes;
    if (auto n = report.notes.find(r.image_id); n != report.notes.end())
      for (const auto& s : n->second) notes += (notes.empty() ? "" : "; ") + s;
    fields.push_back(notes);
    out += io::csv_row(fields);
  }
  return out;
}

std::string annotation_summary_json(const AnnotatedReport& report) {
  nlohmann::json j = nlohmann::json::object();
  for (auto c : kErrorCategories) j[to_string(c)] = report.counts.at(c);
  return j.dump(2) + "\n";
}

} // namespace hindicap
