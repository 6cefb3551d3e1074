#pragma once

// Data model and JSONL persistence for instruction/response/edit corpora.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lamp/utf8.hpp"

namespace lamp {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invariant violation on a specific record and field.
class ValidationError : public CorpusError {
 public:
  ValidationError(std::string record_id, std::string field, const std::string& message)
      : CorpusError("record '" + record_id + "', field '" + field + "': " + message),
        record_id_(std::move(record_id)),
        field_(std::move(field)) {}
  const std::string& record_id() const noexcept { return record_id_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string record_id_;
  std::string field_;
};

enum class Genre { Fiction, TravelWriting, FoodWriting, PersonalEssay, InternetAdvice };
enum class Split { Train, Test };

inline std::string_view to_string(Genre g) {
  switch (g) {
    case Genre::Fiction: return "Fiction";
    case Genre::TravelWriting: return "TravelWriting";
    case Genre::FoodWriting: return "FoodWriting";
    case Genre::PersonalEssay: return "PersonalEssay";
    case Genre::InternetAdvice: return "InternetAdvice";
  }
  return "?";
}

inline std::optional<Genre> parse_genre(std::string_view s) {
  for (Genre g : {Genre::Fiction, Genre::TravelWriting, Genre::FoodWriting, Genre::PersonalEssay,
                  Genre::InternetAdvice}) {
    if (to_string(g) == s) return g;
  }
  return std::nullopt;
}

inline std::string_view to_string(Split s) { return s == Split::Train ? "Train" : "Test"; }

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "Train") return Split::Train;
  if (s == "Test") return Split::Test;
  return std::nullopt;
}

/// One of the seven taxonomy categories, or a free-form Other(name).
class EditCategory {
 public:
  enum class Kind : std::uint8_t {
    Cliche,
    UnnecessaryRedundantExposition,
    PurpleProse,
    PoorSentenceStructure,
    LackOfSpecificityAndDetail,
    AwkwardWordChoiceAndPhrasing,
    TenseInconsistency,
    Other,
  };

  EditCategory(Kind kind) : kind_(kind) {  // NOLINT(google-explicit-constructor)
    if (kind == Kind::Other) throw std::invalid_argument("Other category requires a name");
  }

  static EditCategory other(std::string name) {
    if (name.empty()) throw std::invalid_argument("Other category requires a non-empty name");
    EditCategory c(Kind::Cliche);
    c.kind_ = Kind::Other;
    c.other_name_ = std::move(name);
    return c;
  }

  Kind kind() const noexcept { return kind_; }
  bool is_other() const noexcept { return kind_ == Kind::Other; }
  const std::string& other_name() const noexcept { return other_name_; }

  /// Serialized name of a named category; for Other, the free-form name.
  std::string wire_name() const {
    switch (kind_) {
      case Kind::Cliche: return "Cliche";
      case Kind::UnnecessaryRedundantExposition: return "UnnecessaryRedundantExposition";
      case Kind::PurpleProse: return "PurpleProse";
      case Kind::PoorSentenceStructure: return "PoorSentenceStructure";
      case Kind::LackOfSpecificityAndDetail: return "LackOfSpecificityAndDetail";
      case Kind::AwkwardWordChoiceAndPhrasing: return "AwkwardWordChoiceAndPhrasing";
      case Kind::TenseInconsistency: return "TenseInconsistency";
      case Kind::Other: return other_name_;
    }
    return {};
  }

  /// Human-facing label, as used in prompts and reports.
  std::string display_name() const {
    switch (kind_) {
      case Kind::Cliche: return "Cliche";
      case Kind::UnnecessaryRedundantExposition: return "Unnecessary/Redundant Exposition";
      case Kind::PurpleProse: return "Purple Prose";
      case Kind::PoorSentenceStructure: return "Poor Sentence Structure";
      case Kind::LackOfSpecificityAndDetail: return "Lack of Specificity and Detail";
      case Kind::AwkwardWordChoiceAndPhrasing: return "Awkward Word Choice and Phrasing";
      case Kind::TenseInconsistency: return "Tense Consistency";
      case Kind::Other: return "Other: " + other_name_;
    }
    return {};
  }

  friend bool operator==(const EditCategory&, const EditCategory&) = default;
  friend auto operator<=>(const EditCategory& a, const EditCategory& b) {
    if (auto c = a.kind_ <=> b.kind_; c != 0) return c;
    return a.other_name_.compare(b.other_name_) <=> 0;
  }

 private:
  Kind kind_;
  std::string other_name_;
};

inline constexpr std::array<EditCategory::Kind, 7> kNamedCategories = {
    EditCategory::Kind::AwkwardWordChoiceAndPhrasing,
    EditCategory::Kind::Cliche,
    EditCategory::Kind::PoorSentenceStructure,
    EditCategory::Kind::UnnecessaryRedundantExposition,
    EditCategory::Kind::LackOfSpecificityAndDetail,
    EditCategory::Kind::PurpleProse,
    EditCategory::Kind::TenseInconsistency,
};

/// Exact wire-name lookup for the seven named categories.
inline std::optional<EditCategory> parse_named_category(std::string_view name) {
  for (auto kind : kNamedCategories) {
    EditCategory c(kind);
    if (c.wire_name() == name) return c;
  }
  return std::nullopt;
}

inline ordered_json category_to_json(const EditCategory& c) {
  if (c.is_other()) return ordered_json{{"other", c.other_name()}};
  return c.wire_name();
}

inline EditCategory category_from_json(const json& j) {
  if (j.is_string()) {
    if (auto c = parse_named_category(j.get<std::string>())) return *c;
    throw CorpusError("unknown edit category '" + j.get<std::string>() + "'");
  }
  if (j.is_object() && j.size() == 1 && j.contains("other") && j["other"].is_string()) {
    auto name = j["other"].get<std::string>();
    if (name.empty()) throw CorpusError("Other category requires a non-empty name");
    return EditCategory::other(std::move(name));
  }
  throw CorpusError("edit category must be a name or {\"other\": name}");
}

struct ParagraphRecord {
  std::string id;
  Genre genre = Genre::Fiction;
  std::string venue;
  std::optional<std::string> seed_paragraph;
  std::string instruction;
  std::string generator;
  std::string response;
  Split split = Split::Test;

  friend bool operator==(const ParagraphRecord&, const ParagraphRecord&) = default;
};

/// A single edit. Offsets are scalar-value indices into the paragraph;
/// start == end denotes a pure insertion point.
struct EditSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string original;
  std::string replacement;
  EditCategory category = EditCategory::Kind::Cliche;
  std::string annotator;
  std::int64_t order_index = 0;
  bool undone = false;

  friend bool operator==(const EditSpan&, const EditSpan&) = default;
};

struct QualityScores {
  int iwqs = 0;
  int fwqs = 0;
  std::string annotator;

  friend bool operator==(const QualityScores&, const QualityScores&) = default;
};

struct AnnotatedParagraph {
  ParagraphRecord record;
  std::vector<EditSpan> edits;
  std::optional<QualityScores> scores;

  /// Edits that count for analytics (undone ones are kept only in the log).
  std::vector<EditSpan> live_edits() const {
    std::vector<EditSpan> out;
    for (const auto& e : edits) {
      if (!e.undone) out.push_back(e);
    }
    return out;
  }

  friend bool operator==(const AnnotatedParagraph&, const AnnotatedParagraph&) = default;
};

/// True when two edits cannot both be applied to the same original text.
/// Two insertion points collide only at the same offset; an insertion
/// collides with a range only strictly inside it.
inline bool edits_conflict(std::size_t a_start, std::size_t a_end, std::size_t b_start,
                           std::size_t b_end) {
  const bool a_point = a_start == a_end;
  const bool b_point = b_start == b_end;
  if (a_point && b_point) return a_start == b_start;
  if (a_point) return b_start < a_start && a_start < b_end;
  if (b_point) return a_start < b_start && b_start < a_end;
  return a_start < b_end && b_start < a_end;
}

inline bool edits_conflict(const EditSpan& a, const EditSpan& b) {
  return edits_conflict(a.start, a.end, b.start, b.end);
}

inline void validate_scores(const std::string& id, const QualityScores& s) {
  if (s.iwqs < 1 || s.iwqs > 10) {
    throw ValidationError(id, "scores.iwqs", "must be in 1..10, got " + std::to_string(s.iwqs));
  }
  if (s.fwqs < 1 || s.fwqs > 10) {
    throw ValidationError(id, "scores.fwqs", "must be in 1..10, got " + std::to_string(s.fwqs));
  }
}

/// Checks one edit against the decoded paragraph text.
inline void validate_edit(const std::string& id, std::u32string_view text, const EditSpan& e,
                          std::size_t index) {
  const std::string field = "edits[" + std::to_string(index) + "]";
  if (e.start > e.end || e.end > text.size()) {
    throw ValidationError(id, field,
                          "offsets [" + std::to_string(e.start) + "," + std::to_string(e.end) +
                              ") outside paragraph of length " + std::to_string(text.size()));
  }
  if (e.original.empty() && e.replacement.empty()) {
    throw ValidationError(id, field, "original and replacement are both empty");
  }
  auto expected = utf8::encode(text.substr(e.start, e.end - e.start));
  if (expected != e.original) {
    throw ValidationError(id, field + ".original",
                          "text at [" + std::to_string(e.start) + "," + std::to_string(e.end) +
                              ") is \"" + expected + "\" but original is \"" + e.original + "\"");
  }
}

inline void validate(const AnnotatedParagraph& p) {
  const auto& id = p.record.id;
  if (id.empty()) throw ValidationError(id, "id", "must be non-empty");
  if (p.record.response.empty()) throw ValidationError(id, "response", "must be non-empty");
  std::u32string text;
  try {
    text = utf8::decode(p.record.response);
  } catch (const utf8::DecodeError& e) {
    throw ValidationError(id, "response", e.what());
  }
  for (std::size_t i = 0; i < p.edits.size(); ++i) {
    validate_edit(id, text, p.edits[i], i);
    if (i > 0 && p.edits[i].order_index <= p.edits[i - 1].order_index) {
      throw ValidationError(id, "edits[" + std::to_string(i) + "].order_index",
                            "must be strictly increasing");
    }
  }
  auto live = p.live_edits();
  for (std::size_t i = 0; i < live.size(); ++i) {
    for (std::size_t j = i + 1; j < live.size(); ++j) {
      if (edits_conflict(live[i], live[j])) {
        throw ValidationError(id, "edits",
                              "live edits [" + std::to_string(live[i].start) + "," +
                                  std::to_string(live[i].end) + ") and [" +
                                  std::to_string(live[j].start) + "," +
                                  std::to_string(live[j].end) + ") overlap");
      }
    }
  }
  if (p.scores) validate_scores(id, *p.scores);
}

// ---- JSON mapping ----------------------------------------------------------

inline ordered_json edit_to_json(const EditSpan& e) {
  return ordered_json{{"start", e.start},
                      {"end", e.end},
                      {"original", e.original},
                      {"replacement", e.replacement},
                      {"category", category_to_json(e.category)},
                      {"annotator", e.annotator},
                      {"order_index", e.order_index},
                      {"undone", e.undone}};
}

namespace detail {

template <typename T>
T required(const json& j, const char* key, const std::string& id) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(id, key, "missing");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(id, key, "wrong type");
  }
}

}  // namespace detail

inline EditSpan edit_from_json(const json& j, const std::string& id) {
  if (!j.is_object()) throw ValidationError(id, "edits", "edit must be an object");
  EditSpan e;
  auto start = detail::required<std::int64_t>(j, "start", id);
  auto end = detail::required<std::int64_t>(j, "end", id);
  if (start < 0 || end < 0) throw ValidationError(id, "edits", "negative offset");
  e.start = static_cast<std::size_t>(start);
  e.end = static_cast<std::size_t>(end);
  e.original = detail::required<std::string>(j, "original", id);
  e.replacement = detail::required<std::string>(j, "replacement", id);
  if (!j.contains("category")) throw ValidationError(id, "category", "missing");
  try {
    e.category = category_from_json(j["category"]);
  } catch (const CorpusError& err) {
    throw ValidationError(id, "category", err.what());
  }
  e.annotator = j.value("annotator", std::string{});
  e.order_index = j.value("order_index", std::int64_t{0});
  e.undone = j.value("undone", false);
  return e;
}

inline ordered_json record_fields_to_json(const ParagraphRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["genre"] = std::string(to_string(r.genre));
  j["venue"] = r.venue;
  j["seed_paragraph"] = r.seed_paragraph ? ordered_json(*r.seed_paragraph) : ordered_json(nullptr);
  j["instruction"] = r.instruction;
  j["generator"] = r.generator;
  j["response"] = r.response;
  j["split"] = std::string(to_string(r.split));
  return j;
}

inline ordered_json to_json(const AnnotatedParagraph& p) {
  auto j = record_fields_to_json(p.record);
  j["edits"] = ordered_json::array();
  for (const auto& e : p.edits) j["edits"].push_back(edit_to_json(e));
  if (p.scores) {
    j["scores"] = ordered_json{
        {"iwqs", p.scores->iwqs}, {"fwqs", p.scores->fwqs}, {"annotator", p.scores->annotator}};
  } else {
    j["scores"] = nullptr;
  }
  return j;
}

inline ParagraphRecord record_from_json(const json& j) {
  if (!j.is_object()) throw CorpusError("record must be a JSON object");
  ParagraphRecord r;
  if (!j.contains("id") || !j["id"].is_string()) throw ValidationError("", "id", "missing");
  r.id = j["id"].get<std::string>();
  auto genre = detail::required<std::string>(j, "genre", r.id);
  if (auto g = parse_genre(genre)) {
    r.genre = *g;
  } else {
    throw ValidationError(r.id, "genre", "unknown genre '" + genre + "'");
  }
  r.venue = j.value("venue", std::string{});
  if (auto it = j.find("seed_paragraph"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ValidationError(r.id, "seed_paragraph", "wrong type");
    r.seed_paragraph = it->get<std::string>();
  }
  r.instruction = j.value("instruction", std::string{});
  r.generator = j.value("generator", std::string{});
  r.response = detail::required<std::string>(j, "response", r.id);
  auto split = detail::required<std::string>(j, "split", r.id);
  if (auto s = parse_split(split)) {
    r.split = *s;
  } else {
    throw ValidationError(r.id, "split", "unknown split '" + split + "'");
  }
  return r;
}

inline AnnotatedParagraph from_json(const json& j) {
  AnnotatedParagraph p;
  p.record = record_from_json(j);
  const auto& id = p.record.id;
  if (auto it = j.find("edits"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError(id, "edits", "must be an array");
    for (const auto& e : *it) p.edits.push_back(edit_from_json(e, id));
  }
  if (auto it = j.find("scores"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ValidationError(id, "scores", "must be an object");
    QualityScores s;
    s.iwqs = detail::required<int>(*it, "iwqs", id);
    s.fwqs = detail::required<int>(*it, "fwqs", id);
    s.annotator = it->value("annotator", std::string{});
    p.scores = s;
  }
  return p;
}

// ---- file I/O --------------------------------------------------------------

struct LoadOptions {
  /// Multi-annotator exports repeat a paragraph id once per annotator.
  bool unique_ids = true;
};

inline std::vector<AnnotatedParagraph> parse_corpus(std::istream& in, LoadOptions opts = {}) {
  std::vector<AnnotatedParagraph> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    try {
      auto p = from_json(j);
      validate(p);
      if (opts.unique_ids && !seen.insert(p.record.id).second) {
        throw ValidationError(p.record.id, "id", "duplicate id in corpus");
      }
      out.push_back(std::move(p));
    } catch (const CorpusError& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<AnnotatedParagraph> load_corpus(const std::string& path, LoadOptions opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open corpus file '" + path + "'");
  return parse_corpus(in, opts);
}

inline std::string dump_line(const ordered_json& j) {
  return j.dump(-1, ' ', false, ordered_json::error_handler_t::strict);
}

inline void write_corpus(std::ostream& out, const std::vector<AnnotatedParagraph>& records) {
  for (const auto& p : records) out << dump_line(to_json(p)) << '\n';
}

inline void save_corpus(const std::vector<AnnotatedParagraph>& records, const std::string& path) {
  for (const auto& p : records) validate(p);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot write corpus file '" + path + "'");
  write_corpus(out, records);
  if (!out) throw CorpusError("write failed for '" + path + "'");
}

struct SplitResult {
  std::vector<AnnotatedParagraph> train;
  std::vector<AnnotatedParagraph> test;
};

/// Partitions records by id; the split field of each output record is set to
/// match the side it landed on.
inline SplitResult split_corpus(const std::vector<AnnotatedParagraph>& records,
                                const std::set<std::string>& train_ids) {
  std::set<std::string> known;
  for (const auto& p : records) known.insert(p.record.id);
  for (const auto& id : train_ids) {
    if (!known.count(id)) throw CorpusError("train id '" + id + "' not present in corpus");
  }
  SplitResult out;
  for (auto p : records) {
    if (train_ids.count(p.record.id)) {
      p.record.split = Split::Train;
      out.train.push_back(std::move(p));
    } else {
      p.record.split = Split::Test;
      out.test.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace lamp
