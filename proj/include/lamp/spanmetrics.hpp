#pragma once

// Character-level span precision (general and categorical) and
// multi-annotator span agreement.

#include <algorithm>
#include <cstddef>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lamp/corpus.hpp"
#include "lamp/report.hpp"

namespace lamp::spanmetrics {

class SpanError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabeledSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  EditCategory category = EditCategory::Kind::Cliche;

  std::size_t length() const { return end - start; }
  friend bool operator==(const LabeledSpan&, const LabeledSpan&) = default;
};

struct PrecisionResult {
  double general = 1.0;
  double categorical = 1.0;
  std::size_t predicted_chars = 0;
  std::size_t overlap_chars = 0;
  std::size_t category_matched_chars = 0;
};

inline std::string describe(const LabeledSpan& s) {
  return "[" + std::to_string(s.start) + "," + std::to_string(s.end) + ")";
}

/// Checks bounds and that no two spans on one side overlap.
inline void validate_side(const std::vector<LabeledSpan>& spans, std::size_t text_length,
                          const char* side) {
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > text_length) {
      throw SpanError(std::string(side) + " span " + describe(s) + " invalid for text of length " +
                      std::to_string(text_length));
    }
  }
  std::vector<LabeledSpan> sorted = spans;
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledSpan& a, const LabeledSpan& b) { return a.start < b.start; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].start < sorted[i - 1].end) {
      throw SpanError(std::string(side) + " spans " + describe(sorted[i - 1]) + " and " +
                      describe(sorted[i]) + " overlap");
    }
  }
}

inline std::size_t overlap(const LabeledSpan& a, const LabeledSpan& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  return hi > lo ? hi - lo : 0;
}

/// Predicted characters covered by gold, over all predicted characters.
/// An empty prediction set is vacuously precise (1.0, predicted_chars = 0).
inline PrecisionResult precision(const std::vector<LabeledSpan>& predicted,
                                 const std::vector<LabeledSpan>& gold, std::size_t text_length) {
  validate_side(predicted, text_length, "predicted");
  validate_side(gold, text_length, "gold");
  PrecisionResult r;
  for (const auto& p : predicted) {
    r.predicted_chars += p.length();
    for (const auto& g : gold) {
      const std::size_t o = overlap(p, g);
      r.overlap_chars += o;
      if (p.category == g.category) r.category_matched_chars += o;
    }
  }
  if (r.predicted_chars > 0) {
    const double denom = static_cast<double>(r.predicted_chars);
    r.general = static_cast<double>(r.overlap_chars) / denom;
    r.categorical = static_cast<double>(r.category_matched_chars) / denom;
  }
  return r;
}

struct AgreementResult {
  double general = 0.0;
  double categorical = 0.0;
  std::size_t ordered_pairs = 0;
  std::string pairing = "ordered";
};

/// Mean precision over all ordered annotator pairs (one as prediction, the
/// other as gold).
inline AgreementResult pairwise_agreement(const std::map<std::string, std::vector<LabeledSpan>>& annotations,
                                          std::size_t text_length) {
  if (annotations.size() < 2) throw SpanError("agreement needs at least 2 annotators");
  AgreementResult out;
  for (const auto& [a, pred] : annotations) {
    for (const auto& [b, gold] : annotations) {
      if (a == b) continue;
      auto r = precision(pred, gold, text_length);
      out.general += r.general;
      out.categorical += r.categorical;
      ++out.ordered_pairs;
    }
  }
  out.general /= static_cast<double>(out.ordered_pairs);
  out.categorical /= static_cast<double>(out.ordered_pairs);
  return out;
}

inline std::vector<LabeledSpan> spans_of(const std::vector<EditSpan>& edits) {
  std::vector<LabeledSpan> out;
  for (const auto& e : edits) {
    if (e.undone || e.start == e.end) continue;  // insertion points select no characters
    out.push_back({e.start, e.end, e.category});
  }
  return out;
}

struct ParagraphPrecision {
  std::string id;
  PrecisionResult result;
};

struct CorpusPrecision {
  std::vector<ParagraphPrecision> rows;
  double mean_general = 0.0;
  double mean_categorical = 0.0;
};

/// Scores predictions against gold per paragraph id. Paragraphs present only
/// in the prediction set are an error; gold-only paragraphs are skipped.
inline CorpusPrecision corpus_precision(const std::vector<AnnotatedParagraph>& predicted,
                                        const std::vector<AnnotatedParagraph>& gold) {
  std::map<std::string, const AnnotatedParagraph*> gold_by_id;
  for (const auto& g : gold) gold_by_id[g.record.id] = &g;
  CorpusPrecision out;
  for (const auto& p : predicted) {
    auto it = gold_by_id.find(p.record.id);
    if (it == gold_by_id.end()) throw SpanError("no gold paragraph for id '" + p.record.id + "'");
    if (it->second->record.response != p.record.response) {
      throw SpanError("paragraph '" + p.record.id + "' text differs between prediction and gold");
    }
    const std::size_t len = utf8::length(p.record.response);
    out.rows.push_back({p.record.id, precision(spans_of(p.edits), spans_of(it->second->edits), len)});
  }
  if (!out.rows.empty()) {
    for (const auto& r : out.rows) {
      out.mean_general += r.result.general;
      out.mean_categorical += r.result.categorical;
    }
    out.mean_general /= static_cast<double>(out.rows.size());
    out.mean_categorical /= static_cast<double>(out.rows.size());
  }
  return out;
}

struct CorpusAgreement {
  std::vector<std::pair<std::string, AgreementResult>> rows;
  double mean_general = 0.0;
  double mean_categorical = 0.0;
};

/// Groups records by paragraph id (one record per annotator) and averages
/// the per-paragraph agreement over paragraphs with at least two annotators.
inline CorpusAgreement corpus_agreement(const std::vector<AnnotatedParagraph>& records) {
  std::map<std::string, std::map<std::string, std::vector<LabeledSpan>>> by_paragraph;
  std::map<std::string, std::size_t> length;
  for (const auto& r : records) {
    std::string annotator = r.scores ? r.scores->annotator : std::string{};
    if (annotator.empty() && !r.edits.empty()) annotator = r.edits.front().annotator;
    if (annotator.empty()) {
      throw SpanError("record '" + r.record.id + "' has no annotator");
    }
    auto& slot = by_paragraph[r.record.id][annotator];
    auto spans = spans_of(r.edits);
    slot.insert(slot.end(), spans.begin(), spans.end());
    length[r.record.id] = utf8::length(r.record.response);
  }
  CorpusAgreement out;
  for (const auto& [id, ann] : by_paragraph) {
    if (ann.size() < 2) continue;
    out.rows.emplace_back(id, pairwise_agreement(ann, length[id]));
  }
  if (out.rows.empty()) throw SpanError("no paragraph has edits from 2 or more annotators");
  for (const auto& [id, a] : out.rows) {
    out.mean_general += a.general;
    out.mean_categorical += a.categorical;
  }
  out.mean_general /= static_cast<double>(out.rows.size());
  out.mean_categorical /= static_cast<double>(out.rows.size());
  return out;
}

inline std::string to_csv(const CorpusPrecision& cp) {
  std::ostringstream os;
  os << "id,predicted_chars,overlap_chars,category_matched_chars,general,categorical\n";
  for (const auto& r : cp.rows) {
    os << csv_escape(r.id) << ',' << r.result.predicted_chars << ',' << r.result.overlap_chars << ','
       << r.result.category_matched_chars << ',' << fixed(r.result.general, 6) << ','
       << fixed(r.result.categorical, 6) << '\n';
  }
  os << "MEAN,,,," << fixed(cp.mean_general, 6) << ',' << fixed(cp.mean_categorical, 6) << '\n';
  return os.str();
}

}  // namespace lamp::spanmetrics
