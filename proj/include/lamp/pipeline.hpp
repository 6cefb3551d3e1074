#pragma once

// Generation and automatic editing: instruction backtranslation, venue-styled
// response generation, few-shot span detection, category-specific rewriting
// and the oracle/full editing conditions.

#include <algorithm>
#include <array>
#include <cctype>
#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "lamp/corpus.hpp"
#include "lamp/editops.hpp"
#include "lamp/llmclient.hpp"
#include "lamp/prompts.hpp"
#include "lamp/utf8.hpp"
#include "lamp/util.hpp"

namespace lamp::pipeline {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The model's output could not be interpreted; carries the raw text.
class MalformedOutput : public PipelineError {
 public:
  MalformedOutput(const std::string& what, std::string raw)
      : PipelineError(what + ": " + raw.substr(0, 200)), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

inline std::string replace_all(std::string_view text, std::string_view slot, std::string_view value) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = text.find(slot, pos);
    if (hit == std::string_view::npos) break;
    out.append(text.substr(pos, hit - pos));
    out.append(value);
    pos = hit + slot.size();
  }
  out.append(text.substr(pos));
  return out;
}

// ---- venues and generation prompts --------------------------------------------

enum class Venue { NewYorkerFiction, NYTModernLove, NYTCooking, NYTTravel, InternetAdviceColumnist };

inline constexpr std::array<Venue, 5> kAllVenues = {Venue::NewYorkerFiction, Venue::NYTModernLove,
                                                    Venue::NYTCooking, Venue::NYTTravel,
                                                    Venue::InternetAdviceColumnist};

inline std::string_view to_string(Venue v) {
  switch (v) {
    case Venue::NewYorkerFiction: return "NewYorkerFiction";
    case Venue::NYTModernLove: return "NYTModernLove";
    case Venue::NYTCooking: return "NYTCooking";
    case Venue::NYTTravel: return "NYTTravel";
    case Venue::InternetAdviceColumnist: return "InternetAdviceColumnist";
  }
  return "?";
}

inline Venue parse_venue(std::string_view s) {
  for (auto v : kAllVenues) {
    if (to_string(v) == s) return v;
  }
  throw PipelineError("unknown venue '" + std::string(s) + "'");
}

inline Venue venue_for(Genre g) {
  switch (g) {
    case Genre::Fiction: return Venue::NewYorkerFiction;
    case Genre::PersonalEssay: return Venue::NYTModernLove;
    case Genre::FoodWriting: return Venue::NYTCooking;
    case Genre::TravelWriting: return Venue::NYTTravel;
    case Genre::InternetAdvice: return Venue::InternetAdviceColumnist;
  }
  return Venue::NewYorkerFiction;
}

/// Full response template for a venue, still holding the instruction slot.
inline std::string venue_template(Venue v) {
  std::string_view persona;
  switch (v) {
    case Venue::NewYorkerFiction: persona = prompts::kPersonaNewYorker; break;
    case Venue::NYTModernLove: persona = prompts::kPersonaModernLove; break;
    case Venue::NYTCooking: persona = prompts::kPersonaCooking; break;
    case Venue::NYTTravel: persona = prompts::kPersonaTravel; break;
    case Venue::InternetAdviceColumnist: persona = prompts::kPersonaAdvice; break;
  }
  return replace_all(prompts::kResponseTemplate, prompts::kPersonaSlot, persona);
}

enum class InstructionForm { Question, Instruction };

inline std::string build_backtranslation_prompt(std::string_view paragraph,
                                                InstructionForm form = InstructionForm::Question) {
  if (paragraph.empty()) throw PipelineError("cannot backtranslate an empty paragraph");
  auto tmpl = form == InstructionForm::Question ? prompts::kBacktranslateQuestion
                                                : prompts::kBacktranslateInstruction;
  return replace_all(tmpl, prompts::kParagraphSlot, paragraph);
}

inline std::string build_response_prompt(std::string_view instruction, Venue venue) {
  if (instruction.empty()) throw PipelineError("cannot generate a response to an empty instruction");
  return replace_all(venue_template(venue), prompts::kInstructionSlot, instruction);
}

// ---- exemplars ---------------------------------------------------------------------

struct DetectionExemplar {
  std::string paragraph;
  std::vector<std::pair<std::string, EditCategory>> spans;  // verbatim text, category
};

struct RewriteExemplar {
  std::string paragraph;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string original;
  std::string edited;
};

inline constexpr std::size_t kRewriteExemplarsPerCategory = 25;

/// Few-shot material drawn once from the train split with a fixed seed.
class ExemplarBank {
 public:
  ExemplarBank() = default;

  static ExemplarBank from_corpus(const std::vector<AnnotatedParagraph>& corpus, std::uint64_t seed,
                                  std::size_t per_category = kRewriteExemplarsPerCategory) {
    ExemplarBank bank;
    std::vector<const AnnotatedParagraph*> train;
    for (const auto& p : corpus) {
      if (p.record.split == Split::Train && !p.live_edits().empty()) train.push_back(&p);
    }
    std::vector<DetectionExemplar> det;
    std::map<EditCategory, std::vector<RewriteExemplar>> rw;
    for (const auto* p : train) {
      auto live = p->live_edits();
      std::sort(live.begin(), live.end(), [](const EditSpan& a, const EditSpan& b) { return a.start < b.start; });
      DetectionExemplar d{p->record.response, {}};
      for (const auto& e : live) {
        if (e.category.is_other()) continue;
        if (!e.original.empty()) d.spans.emplace_back(e.original, e.category);
        if (!e.original.empty()) {
          rw[e.category].push_back({p->record.response, e.start, e.end, e.original, e.replacement});
        }
      }
      if (!d.spans.empty()) det.push_back(std::move(d));
    }
    seeded_shuffle(det, seed);
    bank.detection_ = std::move(det);
    std::uint64_t salt = 0;
    for (auto& [cat, list] : rw) {
      seeded_shuffle(list, seed ^ (0x9E3779B97F4A7C15ULL * ++salt));
      if (list.size() > per_category) list.resize(per_category);
    }
    bank.rewrite_ = std::move(rw);
    return bank;
  }

  std::size_t detection_pool() const { return detection_.size(); }

  std::vector<DetectionExemplar> detection(std::size_t shots) const {
    if (shots > detection_.size()) {
      throw PipelineError("requested " + std::to_string(shots) + " detection exemplars but only " +
                          std::to_string(detection_.size()) + " are available");
    }
    return {detection_.begin(), detection_.begin() + static_cast<std::ptrdiff_t>(shots)};
  }

  const std::vector<RewriteExemplar>& rewrite(const EditCategory& c) const {
    static const std::vector<RewriteExemplar> kEmpty;
    auto it = rewrite_.find(c);
    return it == rewrite_.end() ? kEmpty : it->second;
  }

 private:
  std::vector<DetectionExemplar> detection_;
  std::map<EditCategory, std::vector<RewriteExemplar>> rewrite_;
};

// ---- detection -----------------------------------------------------------------------

inline bool is_allowed_shots(int shots) { return shots == 2 || shots == 5 || shots == 25; }

inline std::string exemplar_output_json(const DetectionExemplar& ex) {
  ordered_json arr = ordered_json::array();
  for (const auto& [text, cat] : ex.spans) {
    arr.push_back(ordered_json{{"span", text}, {"category", cat.display_name()}});
  }
  return arr.dump(-1, ' ', false);
}

inline std::string build_detection_prompt(const std::vector<DetectionExemplar>& exemplars, int shots,
                                          std::string_view paragraph) {
  if (!is_allowed_shots(shots)) throw PipelineError("shots must be 2, 5 or 25; got " + std::to_string(shots));
  if (exemplars.size() < static_cast<std::size_t>(shots)) {
    throw PipelineError("need " + std::to_string(shots) + " exemplars, have " + std::to_string(exemplars.size()));
  }
  if (paragraph.empty()) throw PipelineError("cannot detect spans in an empty paragraph");
  std::string out = replace_all(prompts::kDetectionHeader, prompts::kCountSlot, std::to_string(shots));
  out += prompts::kDetectionCategories;
  for (int i = 0; i < shots; ++i) {
    const auto& ex = exemplars[static_cast<std::size_t>(i)];
    out += "Example " + std::to_string(i + 1) + ":\nInput Text\n" + ex.paragraph + "\n\nOutput:\n" +
           exemplar_output_json(ex) + "\n\n";
  }
  out += prompts::kDetectionRules;
  out += "Paragraph:\n\n";
  out += paragraph;
  return out;
}

/// Maps a category label as a model might write it onto the taxonomy.
inline std::optional<EditCategory> match_category_label(std::string_view label) {
  std::string key;
  std::string s = replace_all(replace_all(label, "é", "e"), "É", "e");
  for (unsigned char c : s) {
    if (std::isalnum(c)) key.push_back(static_cast<char>(std::tolower(c)));
  }
  using K = EditCategory::Kind;
  static const std::map<std::string, K> kAliases = {
      {"awkwardwordchoiceandphrasing", K::AwkwardWordChoiceAndPhrasing},
      {"awkwardwordchoice", K::AwkwardWordChoiceAndPhrasing},
      {"cliche", K::Cliche},
      {"poorsentencestructure", K::PoorSentenceStructure},
      {"unnecessaryredundantexposition", K::UnnecessaryRedundantExposition},
      {"unnecessaryexposition", K::UnnecessaryRedundantExposition},
      {"redundantexposition", K::UnnecessaryRedundantExposition},
      {"lackofspecificityanddetail", K::LackOfSpecificityAndDetail},
      {"lackofspecificity", K::LackOfSpecificityAndDetail},
      {"purpleprose", K::PurpleProse},
      {"tenseconsistency", K::TenseInconsistency},
      {"tenseinconsistency", K::TenseInconsistency},
  };
  auto it = kAliases.find(key);
  if (it == kAliases.end()) return std::nullopt;
  return EditCategory(it->second);
}

/// First well-formed JSON array embedded in free text.
inline std::optional<json> extract_first_json_array(std::string_view text) {
  for (std::size_t open = text.find('['); open != std::string_view::npos; open = text.find('[', open + 1)) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '[' || c == '{') {
        ++depth;
      } else if (c == ']' || c == '}') {
        if (--depth == 0) {
          auto j = json::parse(text.substr(open, i - open + 1), nullptr, false);
          if (!j.is_discarded() && j.is_array()) return j;
          break;
        }
        if (depth < 0) break;
      }
    }
  }
  return std::nullopt;
}

enum class Resolution { Exact, WhitespaceNormalized, LongestCommonSubstring };

inline std::string_view to_string(Resolution r) {
  switch (r) {
    case Resolution::Exact: return "exact";
    case Resolution::WhitespaceNormalized: return "whitespace";
    case Resolution::LongestCommonSubstring: return "lcs";
  }
  return "?";
}

struct SpanPrediction {
  std::string raw_span;
  EditCategory category = EditCategory::Kind::Cliche;
  std::optional<std::pair<std::size_t, std::size_t>> resolved;
  std::optional<Resolution> resolution;
};

struct DetectionResult {
  std::vector<SpanPrediction> spans;
  std::vector<std::string> diagnostics;
};

/// Minimum share of the raw span's characters the longest common substring
/// must cover for a fuzzy match.
inline constexpr double kLcsCoverage = 0.9;

namespace detail {

struct Normalized {
  std::u32string text;
  std::vector<std::size_t> origin;  // normalized index -> original index
};

inline Normalized collapse_whitespace(const std::u32string& s) {
  Normalized n;
  bool prev_ws = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (utf8::is_whitespace(s[i])) {
      if (!prev_ws) {
        n.text.push_back(U' ');
        n.origin.push_back(i);
      }
      prev_ws = true;
    } else {
      n.text.push_back(s[i]);
      n.origin.push_back(i);
      prev_ws = false;
    }
  }
  return n;
}

inline std::u32string trim(const std::u32string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && utf8::is_whitespace(s[b])) ++b;
  while (e > b && utf8::is_whitespace(s[e - 1])) --e;
  return s.substr(b, e - b);
}

/// Longest common substring; returns (position in hay, length). Earliest
/// position wins ties.
inline std::pair<std::size_t, std::size_t> longest_common_substring(const std::u32string& needle,
                                                                    const std::u32string& hay) {
  std::vector<std::size_t> prev(hay.size() + 1, 0), cur(hay.size() + 1, 0);
  std::size_t best = 0, best_end = 0;
  for (std::size_t i = 1; i <= needle.size(); ++i) {
    for (std::size_t j = 1; j <= hay.size(); ++j) {
      cur[j] = needle[i - 1] == hay[j - 1] ? prev[j - 1] + 1 : 0;
      if (cur[j] > best || (cur[j] == best && best > 0 && j < best_end)) {
        best = cur[j];
        best_end = j;
      }
    }
    std::swap(prev, cur);
  }
  return {best_end - best, best};
}

inline bool collides(const std::vector<std::pair<std::size_t, std::size_t>>& taken, std::size_t s,
                     std::size_t e) {
  for (const auto& [ts, te] : taken) {
    if (s < te && ts < e) return true;
  }
  return false;
}

}  // namespace detail

/// Parses the model's JSON span list and resolves every span to offsets in the
/// paragraph: exact match, then whitespace-normalized match, then a longest
/// common substring covering at least 90% of the raw span. Unresolvable spans,
/// unknown categories and spans overlapping an earlier-listed span are dropped
/// with a diagnostic.
inline DetectionResult parse_detection_output(std::string_view raw, std::string_view paragraph) {
  auto arr = extract_first_json_array(raw);
  if (!arr) throw MalformedOutput("no JSON array in detection output", std::string(raw));
  const auto text = utf8::decode(paragraph);
  const auto norm_text = detail::collapse_whitespace(text);
  DetectionResult out;
  std::vector<std::pair<std::size_t, std::size_t>> taken;
  std::size_t index = 0;
  for (const auto& item : *arr) {
    const std::string where = "item " + std::to_string(index++);
    if (!item.is_object() || !item.contains("span") || !item["span"].is_string() || !item.contains("category") ||
        !item["category"].is_string()) {
      out.diagnostics.push_back(where + ": dropped, expected {\"span\": string, \"category\": string}");
      continue;
    }
    SpanPrediction pred;
    pred.raw_span = item["span"].get<std::string>();
    auto label = item["category"].get<std::string>();
    auto cat = match_category_label(label);
    if (!cat) {
      out.diagnostics.push_back(where + ": dropped, unknown category '" + label + "'");
      continue;
    }
    pred.category = *cat;
    std::u32string needle;
    try {
      needle = utf8::decode(pred.raw_span);
    } catch (const utf8::DecodeError&) {
      out.diagnostics.push_back(where + ": dropped, span is not valid UTF-8");
      continue;
    }
    if (detail::trim(needle).empty()) {
      out.diagnostics.push_back(where + ": dropped, empty span");
      continue;
    }

    std::optional<std::pair<std::size_t, std::size_t>> hit;
    std::optional<std::pair<std::size_t, std::size_t>> first_hit;
    // (1) exact; prefer the first occurrence not already claimed
    for (auto pos = text.find(needle); pos != std::u32string::npos; pos = text.find(needle, pos + 1)) {
      if (!first_hit) first_hit = std::make_pair(pos, pos + needle.size());
      if (!detail::collides(taken, pos, pos + needle.size())) {
        hit = std::make_pair(pos, pos + needle.size());
        break;
      }
    }
    if (first_hit) {
      pred.resolution = Resolution::Exact;
    } else {
      // (2) whitespace-normalized
      auto n = detail::collapse_whitespace(detail::trim(needle)).text;
      for (auto pos = norm_text.text.find(n); pos != std::u32string::npos;
           pos = norm_text.text.find(n, pos + 1)) {
        const std::size_t s = norm_text.origin[pos];
        const std::size_t e = norm_text.origin[pos + n.size() - 1] + 1;
        if (!first_hit) first_hit = std::make_pair(s, e);
        if (!detail::collides(taken, s, e)) {
          hit = std::make_pair(s, e);
          break;
        }
      }
      if (first_hit) {
        pred.resolution = Resolution::WhitespaceNormalized;
      } else {
        // (3) longest common substring
        auto [pos, len] = detail::longest_common_substring(needle, text);
        if (len > 0 && static_cast<double>(len) >= kLcsCoverage * static_cast<double>(needle.size())) {
          first_hit = std::make_pair(pos, pos + len);
          if (!detail::collides(taken, pos, pos + len)) hit = first_hit;
          pred.resolution = Resolution::LongestCommonSubstring;
        }
      }
    }
    if (!first_hit) {
      out.diagnostics.push_back(where + ": dropped, span not found in paragraph: \"" + pred.raw_span + "\"");
      continue;
    }
    if (!hit) {
      out.diagnostics.push_back(where + ": dropped, overlaps an earlier span: \"" + pred.raw_span + "\"");
      continue;
    }
    pred.resolved = hit;
    if (pred.resolution != Resolution::Exact) {
      out.diagnostics.push_back(where + ": resolved by " + std::string(to_string(*pred.resolution)) + " match");
    }
    taken.push_back(*hit);
    out.spans.push_back(std::move(pred));
  }
  return out;
}

// ---- rewriting -------------------------------------------------------------------------

inline std::string_view rewrite_template(const EditCategory& c) {
  using K = EditCategory::Kind;
  switch (c.kind()) {
    case K::Cliche: return prompts::kRewriteCliche;
    case K::PoorSentenceStructure: return prompts::kRewritePoorSentenceStructure;
    case K::UnnecessaryRedundantExposition: return prompts::kRewriteUnnecessaryExposition;
    case K::LackOfSpecificityAndDetail: return prompts::kRewriteLackOfSpecificity;
    case K::PurpleProse: return prompts::kRewritePurpleProse;
    case K::AwkwardWordChoiceAndPhrasing: return prompts::kRewriteAwkwardWordChoice;
    case K::TenseInconsistency: return prompts::kRewriteTenseConsistency;
    case K::Other: break;
  }
  throw PipelineError("no rewriting prompt for category '" + c.display_name() + "'");
}

/// Paragraph with the target range wrapped in <span></span> tags.
inline std::string highlight(std::string_view paragraph, std::size_t start, std::size_t end) {
  auto t = utf8::decode(paragraph);
  if (start > end || end > t.size()) throw PipelineError("span offsets out of range");
  return utf8::encode(t.substr(0, start)) + "<span>" + utf8::encode(t.substr(start, end - start)) + "</span>" +
         utf8::encode(t.substr(end));
}

inline std::string build_rewrite_prompt(const EditCategory& category, const std::vector<RewriteExemplar>& exemplars,
                                        std::string_view paragraph, std::size_t start, std::size_t end) {
  std::string out = replace_all(rewrite_template(category), prompts::kCountSlot, std::to_string(exemplars.size()));
  out += prompts::kRewriteCoherence;
  out += '\n';
  for (std::size_t i = 0; i < exemplars.size(); ++i) {
    const auto& ex = exemplars[i];
    out += "Example " + std::to_string(i + 1) + "\n\nParagraph: " + highlight(ex.paragraph, ex.start, ex.end) +
           "\nOriginal Span: \"" + ex.original + "\"\nEdited Span: \"" + ex.edited + "\"\n\n";
  }
  out += "Paragraph: " + highlight(paragraph, start, end) + "\nOriginal Span: \"" +
         utf8::substr(paragraph, start, end) + "\"\nEdited Span:";
  return out;
}

/// Text between the first opening and the last closing quote. Straight and
/// curly double quotes are accepted; an `Edited Span:` prefix is ignored.
inline std::string parse_rewrite_output(std::string_view raw) {
  auto s = utf8::decode(raw);
  auto is_open = [](char32_t c) { return c == U'"' || c == 0x201C; };
  auto is_close = [](char32_t c) { return c == U'"' || c == 0x201D; };
  std::size_t open = std::u32string::npos, close = std::u32string::npos;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (is_open(s[i])) {
      open = i;
      break;
    }
  }
  for (std::size_t i = s.size(); i-- > 0;) {
    if (is_close(s[i])) {
      close = i;
      break;
    }
  }
  if (open == std::u32string::npos || close == std::u32string::npos || close <= open) {
    throw MalformedOutput("rewrite output is not a quoted span", std::string(raw));
  }
  return utf8::encode(s.substr(open + 1, close - open - 1));
}

struct BoundaryCheck {
  bool leading_case = true;
  bool leading_punct = true;
  bool trailing_punct = true;
  bool ok() const { return leading_case && leading_punct && trailing_punct; }
};

namespace detail {

enum class CaseClass { Upper, Lower, Other };

inline CaseClass case_class(char32_t c) {
  if (c < 0x80 && std::isupper(static_cast<int>(c))) return CaseClass::Upper;
  if (c < 0x80 && std::islower(static_cast<int>(c))) return CaseClass::Lower;
  return CaseClass::Other;
}

inline bool is_punct(char32_t c) {
  return (c < 0x80 && std::ispunct(static_cast<int>(c))) || c == 0x2014 || c == 0x2013 || c == 0x2019 ||
         c == 0x201C || c == 0x201D || c == 0x2026;
}

}  // namespace detail

/// Whether a rewrite keeps the original span's leading case class and the
/// presence of leading and trailing punctuation. Empty rewrites (deletions)
/// always pass.
inline BoundaryCheck check_boundary(std::string_view original, std::string_view rewrite) {
  BoundaryCheck b;
  auto o = utf8::decode(original), r = utf8::decode(rewrite);
  if (o.empty() || r.empty()) return b;
  b.leading_case = detail::case_class(o.front()) == detail::case_class(r.front());
  b.leading_punct = detail::is_punct(o.front()) == detail::is_punct(r.front());
  b.trailing_punct = detail::is_punct(o.back()) == detail::is_punct(r.back());
  return b;
}

struct RewriteResult {
  std::string text;
  BoundaryCheck boundary;
};

// ---- the editing pipeline ----------------------------------------------------------------

enum class EditMode { Oracle, Full };

inline std::string_view to_string(EditMode m) { return m == EditMode::Oracle ? "oracle" : "full"; }

struct OracleSpans {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::vector<EditCategory> categories;
};

struct FullDetection {
  int shots = 5;
};

using EditRequest = std::variant<OracleSpans, FullDetection>;

struct EditedParagraph {
  std::string id;
  std::string original;
  std::vector<EditSpan> edits;
  std::string final_text;
  EditMode mode = EditMode::Full;
  int shots = 0;
  std::string model;
  std::size_t boundary_violations = 0;
  std::vector<std::string> diagnostics;
};

inline ordered_json to_json(const EditedParagraph& p) {
  ordered_json j;
  j["id"] = p.id;
  j["original"] = p.original;
  j["edits"] = ordered_json::array();
  for (const auto& e : p.edits) j["edits"].push_back(edit_to_json(e));
  j["final"] = p.final_text;
  j["mode"] = std::string(to_string(p.mode));
  j["shots"] = p.shots;
  j["model"] = p.model;
  j["boundary_violations"] = p.boundary_violations;
  j["diagnostics"] = p.diagnostics;
  return j;
}

struct PipelineOptions {
  std::string model;
  double generation_temperature = llm::kGenerationTemperature;
  double editing_temperature = llm::kEditingTemperature;
  int max_tokens = 1024;
  std::size_t jobs = 1;
};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception is
/// rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(jobs, n); ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

class Pipeline {
 public:
  Pipeline(std::shared_ptr<llm::Provider> provider, ExemplarBank bank, PipelineOptions opts)
      : provider_(std::move(provider)), bank_(std::move(bank)), opts_(std::move(opts)) {
    if (!provider_) throw PipelineError("pipeline needs a provider");
  }

  const PipelineOptions& options() const { return opts_; }
  const ExemplarBank& bank() const { return bank_; }

  std::string backtranslate_instruction(std::string_view paragraph,
                                        InstructionForm form = InstructionForm::Question) const {
    return trim_copy(call(build_backtranslation_prompt(paragraph, form), opts_.generation_temperature));
  }

  std::string generate_response(std::string_view instruction, Venue venue) const {
    return trim_copy(call(build_response_prompt(instruction, venue), opts_.generation_temperature));
  }

  DetectionResult detect_spans(std::string_view paragraph, int shots) const {
    auto prompt = build_detection_prompt(bank_.detection(static_cast<std::size_t>(std::max(shots, 0))), shots,
                                         paragraph);
    return parse_detection_output(call(prompt, opts_.editing_temperature), paragraph);
  }

  RewriteResult rewrite_span(std::string_view paragraph, const SpanPrediction& span) const {
    if (!span.resolved) throw PipelineError("cannot rewrite an unresolved span");
    const auto [s, e] = *span.resolved;
    auto prompt = build_rewrite_prompt(span.category, bank_.rewrite(span.category), paragraph, s, e);
    RewriteResult r;
    r.text = parse_rewrite_output(call(prompt, opts_.editing_temperature));
    r.boundary = check_boundary(utf8::substr(paragraph, s, e), r.text);
    return r;
  }

  EditedParagraph edit_paragraph(std::string id, std::string_view paragraph, const EditRequest& request) const {
    EditedParagraph out;
    out.id = std::move(id);
    out.original = std::string(paragraph);
    out.model = opts_.model;
    std::vector<SpanPrediction> spans;
    if (const auto* oracle = std::get_if<OracleSpans>(&request)) {
      out.mode = EditMode::Oracle;
      if (oracle->ranges.size() != oracle->categories.size()) {
        throw PipelineError("oracle spans and categories differ in length");
      }
      for (std::size_t i = 0; i < oracle->ranges.size(); ++i) {
        SpanPrediction p;
        p.resolved = oracle->ranges[i];
        p.category = oracle->categories[i];
        p.raw_span = utf8::substr(paragraph, p.resolved->first, p.resolved->second);
        p.resolution = Resolution::Exact;
        spans.push_back(std::move(p));
      }
    } else {
      const auto& full = std::get<FullDetection>(request);
      out.mode = EditMode::Full;
      out.shots = full.shots;
      auto det = detect_spans(paragraph, full.shots);
      spans = std::move(det.spans);
      out.diagnostics = std::move(det.diagnostics);
    }
    std::sort(spans.begin(), spans.end(),
              [](const SpanPrediction& a, const SpanPrediction& b) { return a.resolved->first < b.resolved->first; });

    std::vector<RewriteResult> rewrites(spans.size());
    try {
      parallel_for(spans.size(), opts_.jobs, [&](std::size_t i) { rewrites[i] = rewrite_span(paragraph, spans[i]); });
    } catch (const std::exception& e) {
      throw PipelineError("editing paragraph '" + out.id + "' failed after " + std::to_string(spans.size()) +
                          " span(s) were selected: " + e.what());
    }

    for (std::size_t i = 0; i < spans.size(); ++i) {
      EditSpan e;
      e.start = spans[i].resolved->first;
      e.end = spans[i].resolved->second;
      e.original = utf8::substr(paragraph, e.start, e.end);
      e.replacement = rewrites[i].text;
      e.category = spans[i].category;
      e.annotator = opts_.model;
      e.order_index = static_cast<std::int64_t>(i);
      if (e.original.empty() && e.replacement.empty()) continue;
      if (!rewrites[i].boundary.ok()) {
        ++out.boundary_violations;
        out.diagnostics.push_back("span [" + std::to_string(e.start) + "," + std::to_string(e.end) +
                                  "): rewrite changes boundary case or punctuation");
      }
      out.edits.push_back(std::move(e));
    }
    out.final_text = editops::apply_edits(paragraph, out.edits);
    return out;
  }

 private:
  std::string call(const std::string& prompt, double temperature) const {
    llm::CompletionRequest req;
    req.model = opts_.model;
    req.user = prompt;
    req.temperature = temperature;
    req.max_tokens = opts_.max_tokens;
    return provider_->complete(req);
  }

  static std::string trim_copy(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::shared_ptr<llm::Provider> provider_;
  ExemplarBank bank_;
  PipelineOptions opts_;
};

}  // namespace lamp::pipeline
