#pragma once

// Edit analytics: operation classification, splicing, Levenshtein distance,
// meaning-preservation classification, per-annotator score normalization and
// corpus-level statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lamp/corpus.hpp"
#include "lamp/evalstats.hpp"
#include "lamp/report.hpp"
#include "lamp/utf8.hpp"

namespace lamp::editops {

class EditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EditOperation { Insertion, Deletion, Replacement };

inline std::string_view to_string(EditOperation op) {
  switch (op) {
    case EditOperation::Insertion: return "Insertion";
    case EditOperation::Deletion: return "Deletion";
    case EditOperation::Replacement: return "Replacement";
  }
  return "?";
}

/// Net change that turns a replacement into an insertion or deletion.
inline constexpr long kNetCharThreshold = 40;

/// Classification on scalar-value lengths. Both zero is not an edit.
inline EditOperation classify_edit_operation(std::size_t original_len, std::size_t replacement_len) {
  if (original_len == 0 && replacement_len == 0) {
    throw EditError("invalid edit: original and replacement are both empty");
  }
  const long net = static_cast<long>(replacement_len) - static_cast<long>(original_len);
  if (original_len == 0 || net >= kNetCharThreshold) return EditOperation::Insertion;
  if (replacement_len == 0 || net <= -kNetCharThreshold) return EditOperation::Deletion;
  return EditOperation::Replacement;
}

inline EditOperation classify_edit_operation(const EditSpan& edit) {
  return classify_edit_operation(utf8::length(edit.original), utf8::length(edit.replacement));
}

/// Splices every live edit into the paragraph. Offsets refer to the original
/// text; splicing runs from the highest start down so they stay valid.
inline std::string apply_edits(std::string_view paragraph, const std::vector<EditSpan>& edits) {
  auto text = utf8::decode(paragraph);
  std::vector<const EditSpan*> live;
  for (const auto& e : edits) {
    if (e.undone) continue;
    if (e.start > e.end || e.end > text.size()) {
      throw EditError("edit offsets [" + std::to_string(e.start) + "," + std::to_string(e.end) +
                      ") out of range for paragraph of length " + std::to_string(text.size()));
    }
    live.push_back(&e);
  }
  for (std::size_t i = 0; i < live.size(); ++i) {
    for (std::size_t j = i + 1; j < live.size(); ++j) {
      if (edits_conflict(*live[i], *live[j])) {
        throw EditError("overlapping edits [" + std::to_string(live[i]->start) + "," +
                        std::to_string(live[i]->end) + ") and [" + std::to_string(live[j]->start) +
                        "," + std::to_string(live[j]->end) + ")");
      }
    }
  }
  // Descending start; at equal start the range goes first so an insertion
  // point sharing its start ends up in front of the replacement.
  std::sort(live.begin(), live.end(), [](const EditSpan* a, const EditSpan* b) {
    if (a->start != b->start) return a->start > b->start;
    return a->end > b->end;
  });
  for (const auto* e : live) {
    text.replace(e->start, e->end - e->start, utf8::decode(e->replacement));
  }
  return utf8::encode(text);
}

inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(std::u32string_view(utf8::decode(a)), std::u32string_view(utf8::decode(b)));
}

enum class MeaningClass { MeaningPreserving, MeaningChanging };

inline constexpr double kDefaultMeaningThreshold = 0.6;

inline MeaningClass classify_meaning(double similarity, double threshold = kDefaultMeaningThreshold) {
  if (!(similarity >= 0.0 && similarity <= 1.0)) {
    throw EditError("similarity " + std::to_string(similarity) + " outside [0,1]");
  }
  return similarity > threshold ? MeaningClass::MeaningPreserving : MeaningClass::MeaningChanging;
}

/// Pluggable semantic-similarity backend returning values in [0,1].
class SimilarityScorer {
 public:
  virtual ~SimilarityScorer() = default;
  virtual std::string name() const = 0;
  virtual double score(std::string_view a, std::string_view b) const = 0;
};

/// Character-trigram cosine similarity. A deterministic stand-in for a neural
/// similarity model, not an approximation of one. Strings shorter than three
/// scalar values contribute themselves as a single gram.
class TrigramCosineScorer final : public SimilarityScorer {
 public:
  std::string name() const override { return "trigram-cosine"; }

  double score(std::string_view a, std::string_view b) const override {
    if (a == b) return 1.0;
    auto ga = grams(utf8::decode(a));
    auto gb = grams(utf8::decode(b));
    if (ga.empty() || gb.empty()) return 0.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [g, c] : ga) {
      na += static_cast<double>(c) * c;
      if (auto it = gb.find(g); it != gb.end()) dot += static_cast<double>(c) * it->second;
    }
    for (const auto& [g, c] : gb) nb += static_cast<double>(c) * c;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
  }

  static std::map<std::u32string, long> grams(const std::u32string& s) {
    std::map<std::u32string, long> out;
    if (s.empty()) return out;
    if (s.size() < 3) {
      out[s] = 1;
      return out;
    }
    for (std::size_t i = 0; i + 3 <= s.size(); ++i) ++out[s.substr(i, 3)];
    return out;
  }
};

inline double score_similarity(const SimilarityScorer& scorer, std::string_view a, std::string_view b) {
  double v;
  try {
    v = scorer.score(a, b);
  } catch (const std::exception& e) {
    throw EditError("similarity scorer '" + scorer.name() + "' failed: " + e.what());
  }
  if (!(v >= 0.0 && v <= 1.0)) {
    throw EditError("similarity scorer '" + scorer.name() + "' returned " + std::to_string(v) +
                    " outside [0,1]");
  }
  return v;
}

/// Per-annotator z-scores (population std), min-max rescaled onto [1,10].
/// A constant list maps to the 5.5 midpoint.
inline std::map<std::string, std::vector<double>> normalize_scores(
    const std::map<std::string, std::vector<int>>& scores_by_annotator) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [annotator, xs] : scores_by_annotator) {
    if (xs.empty()) throw EditError("annotator '" + annotator + "' has no scores");
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double var = 0.0;
    for (int x : xs) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / n);
    auto& dst = out[annotator];
    if (sd == 0.0) {
      dst.assign(xs.size(), 5.5);
      continue;
    }
    std::vector<double> z;
    z.reserve(xs.size());
    for (int x : xs) z.push_back((x - mean) / sd);
    auto [lo, hi] = std::minmax_element(z.begin(), z.end());
    const double zmin = *lo, zmax = *hi;
    for (double v : z) dst.push_back(1.0 + 9.0 * (v - zmin) / (zmax - zmin));
  }
  return out;
}

struct ParagraphDistance {
  std::string id;
  std::size_t n_edits = 0;
  std::size_t distance = 0;
  std::optional<int> iwqs_raw;
  std::optional<double> iwqs_norm;
};

struct CorpusStats {
  std::map<EditOperation, double> op_distribution;
  std::map<EditOperation, std::size_t> op_counts;
  std::map<EditCategory, double> category_distribution;
  std::map<EditCategory, std::size_t> category_counts;
  std::size_t n_paragraphs = 0;
  std::size_t n_edits = 0;
  double mean_edits_per_paragraph = 0.0;
  std::vector<ParagraphDistance> edit_distance_per_paragraph;
  std::optional<double> pearson_r_distance_iwqs;
  /// Similarity histogram over non-deletion edits; empty without a scorer.
  std::vector<std::size_t> meaning_histogram;
  std::size_t meaning_preserving = 0;
  std::size_t meaning_changing = 0;
  double meaning_threshold = kDefaultMeaningThreshold;
  std::string scorer_name;
};

struct StatsOptions {
  const SimilarityScorer* scorer = nullptr;
  double meaning_threshold = kDefaultMeaningThreshold;
  std::size_t histogram_bins = 10;
};

inline CorpusStats corpus_stats(const std::vector<AnnotatedParagraph>& records, StatsOptions opts = {}) {
  if (records.empty()) throw EditError("empty corpus");
  CorpusStats st;
  st.n_paragraphs = records.size();
  st.meaning_threshold = opts.meaning_threshold;
  if (opts.scorer) {
    st.scorer_name = opts.scorer->name();
    st.meaning_histogram.assign(opts.histogram_bins, 0);
  }

  std::map<std::string, std::vector<int>> by_annotator;
  for (const auto& p : records) {
    auto live = p.live_edits();
    ParagraphDistance row;
    row.id = p.record.id;
    row.n_edits = live.size();
    row.distance = levenshtein(p.record.response, apply_edits(p.record.response, live));
    if (p.scores) {
      row.iwqs_raw = p.scores->iwqs;
      by_annotator[p.scores->annotator].push_back(p.scores->iwqs);
    }
    st.edit_distance_per_paragraph.push_back(row);

    for (const auto& e : live) {
      auto op = classify_edit_operation(e);
      ++st.op_counts[op];
      ++st.category_counts[e.category];
      ++st.n_edits;
      if (opts.scorer && op != EditOperation::Deletion && !e.replacement.empty()) {
        double sim = score_similarity(*opts.scorer, e.original, e.replacement);
        auto bin = std::min(opts.histogram_bins - 1,
                            static_cast<std::size_t>(sim * static_cast<double>(opts.histogram_bins)));
        ++st.meaning_histogram[bin];
        if (classify_meaning(sim, opts.meaning_threshold) == MeaningClass::MeaningPreserving) {
          ++st.meaning_preserving;
        } else {
          ++st.meaning_changing;
        }
      }
    }
  }
  if (st.n_edits > 0) {
    const double n = static_cast<double>(st.n_edits);
    for (const auto& [op, c] : st.op_counts) st.op_distribution[op] = static_cast<double>(c) / n;
    for (const auto& [cat, c] : st.category_counts) {
      st.category_distribution[cat] = static_cast<double>(c) / n;
    }
  }
  st.mean_edits_per_paragraph = static_cast<double>(st.n_edits) / static_cast<double>(records.size());

  // Normalized IWQS follows each annotator's list in corpus order.
  auto normalized = normalize_scores(by_annotator);
  std::map<std::string, std::size_t> cursor;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].scores) continue;
    const auto& a = records[i].scores->annotator;
    double norm = normalized[a][cursor[a]++];
    st.edit_distance_per_paragraph[i].iwqs_norm = norm;
    xs.push_back(static_cast<double>(st.edit_distance_per_paragraph[i].distance));
    ys.push_back(norm);
  }
  if (xs.size() >= 2) {
    try {
      st.pearson_r_distance_iwqs = evalstats::pearson_r(xs, ys);
    } catch (const evalstats::StatsError&) {
      // zero variance: correlation undefined, left absent
    }
  }
  return st;
}

inline ordered_json to_json(const CorpusStats& st) {
  ordered_json j;
  j["n_paragraphs"] = st.n_paragraphs;
  j["n_edits"] = st.n_edits;
  j["mean_edits_per_paragraph"] = st.mean_edits_per_paragraph;
  j["op_distribution"] = ordered_json::object();
  for (const auto& [op, v] : st.op_distribution) j["op_distribution"][std::string(to_string(op))] = v;
  j["category_distribution"] = ordered_json::object();
  for (const auto& [cat, v] : st.category_distribution) {
    j["category_distribution"][cat.is_other() ? "Other:" + cat.other_name() : cat.wire_name()] = v;
  }
  j["pearson_r_distance_iwqs"] =
      st.pearson_r_distance_iwqs ? ordered_json(*st.pearson_r_distance_iwqs) : ordered_json(nullptr);
  j["meaning"] = ordered_json{{"scorer", st.scorer_name},
                              {"threshold", st.meaning_threshold},
                              {"preserving", st.meaning_preserving},
                              {"changing", st.meaning_changing},
                              {"histogram", st.meaning_histogram}};
  return j;
}

/// One row per paragraph: id, n_edits, edit_distance, iwqs_raw, iwqs_norm.
inline std::string to_csv(const CorpusStats& st) {
  std::ostringstream os;
  os << "id,n_edits,edit_distance,iwqs_raw,iwqs_norm\n";
  os.precision(6);
  for (const auto& r : st.edit_distance_per_paragraph) {
    os << csv_escape(r.id) << ',' << r.n_edits << ',' << r.distance << ',';
    if (r.iwqs_raw) os << *r.iwqs_raw;
    os << ',';
    if (r.iwqs_norm) os << *r.iwqs_norm;
    os << '\n';
  }
  return os.str();
}

}  // namespace lamp::editops
