#pragma once

// Idiosyncrasy mining: part-of-speech template contrast between an LLM corpus
// and a human corpus, and lexical over-use detection.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lamp/corpus.hpp"
#include "lamp/report.hpp"
#include "lamp/utf8.hpp"

namespace lamp::idiom {

class IdiomError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Token {
  std::string surface;
  std::string tag;
  friend bool operator==(const Token&, const Token&) = default;
};

struct TaggedParagraph {
  std::vector<Token> tokens;
  std::string source_id;
};

/// Tag sequence, e.g. {"DT","NN","IN","NN","CC"}.
using Template = std::vector<std::string>;

inline std::string join(const Template& t, char sep = ' ') {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) out += sep;
    out += t[i];
  }
  return out;
}

/// Reads `surface<TAB>tag` lines; blank lines end a paragraph and an optional
/// `# id: <source_id>` line names the next one. CRLF is accepted.
inline std::vector<TaggedParagraph> parse_tagged(std::istream& in) {
  std::vector<TaggedParagraph> out;
  TaggedParagraph cur;
  auto flush = [&] {
    if (!cur.tokens.empty()) {
      if (cur.source_id.empty()) cur.source_id = "p" + std::to_string(out.size() + 1);
      out.push_back(std::move(cur));
    }
    cur = TaggedParagraph{};
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("# id:", 0) == 0) {
      flush();
      auto id = line.substr(5);
      id.erase(0, id.find_first_not_of(" \t"));
      cur.source_id = id;
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos || tab == 0 ||
        tab + 1 == line.size()) {
      throw IdiomError("line " + std::to_string(line_no) +
                       ": expected exactly two tab-separated fields (surface, tag)");
    }
    cur.tokens.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  flush();
  return out;
}

inline std::vector<TaggedParagraph> load_tagged(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdiomError("cannot open tagged corpus '" + path + "'");
  return parse_tagged(in);
}

inline constexpr std::size_t kMaxExamples = 12;

struct TemplateStats {
  std::size_t count = 0;       // total occurrences
  std::size_t documents = 0;   // paragraphs containing the template
  double doc_fraction = 0.0;
  std::vector<std::vector<Token>> examples;  // first-seen, capped
};

struct TemplateTable {
  std::map<Template, TemplateStats> templates;
  std::size_t n_paragraphs = 0;
  std::set<std::size_t> lengths;
};

inline TemplateTable extract_templates(const std::vector<TaggedParagraph>& corpus,
                                       const std::set<std::size_t>& lengths) {
  if (lengths.empty()) throw IdiomError("template lengths must be non-empty");
  TemplateTable table;
  table.n_paragraphs = corpus.size();
  table.lengths = lengths;
  for (const auto& para : corpus) {
    std::set<Template> seen_here;
    const auto& toks = para.tokens;
    for (std::size_t n : lengths) {
      if (n == 0 || toks.size() < n) continue;
      for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        Template t;
        t.reserve(n);
        for (std::size_t k = i; k < i + n; ++k) t.push_back(toks[k].tag);
        auto& st = table.templates[t];
        ++st.count;
        if (st.examples.size() < kMaxExamples) {
          st.examples.emplace_back(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                   toks.begin() + static_cast<std::ptrdiff_t>(i + n));
        }
        if (seen_here.insert(std::move(t)).second) ++st.documents;
      }
    }
  }
  for (auto& [t, st] : table.templates) {
    st.doc_fraction = table.n_paragraphs
                          ? static_cast<double>(st.documents) / static_cast<double>(table.n_paragraphs)
                          : 0.0;
  }
  return table;
}

/// Most frequent templates; ties broken by lexicographic tag sequence.
inline std::vector<std::pair<Template, const TemplateStats*>> top_templates(const TemplateTable& table,
                                                                            std::size_t k) {
  std::vector<std::pair<Template, const TemplateStats*>> all;
  all.reserve(table.templates.size());
  for (const auto& [t, st] : table.templates) all.emplace_back(t, &st);
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.second->count != b.second->count) return a.second->count > b.second->count;
    return a.first < b.first;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

struct TemplateReport {
  Template pattern;
  std::size_t llm_count = 0;
  std::size_t human_count = 0;
  double llm_doc_fraction = 0.0;
  double human_doc_fraction = 0.0;
  std::vector<std::vector<Token>> representative_sequences;
  std::optional<double> edited_fraction;
};

inline constexpr double kDefaultRarityRatio = 0.5;

/// Flags top-k LLM templates whose human document fraction is below
/// rarity_ratio times the LLM document fraction.
inline std::vector<TemplateReport> contrast_templates(const TemplateTable& llm, const TemplateTable& human,
                                                      int top_k = 50, double rarity_ratio = kDefaultRarityRatio) {
  if (top_k <= 0) throw IdiomError("top_k must be positive");
  if (llm.lengths != human.lengths) throw IdiomError("template tables built with different lengths");
  std::vector<TemplateReport> out;
  for (const auto& [t, st] : top_templates(llm, static_cast<std::size_t>(top_k))) {
    TemplateReport r;
    r.pattern = t;
    r.llm_count = st->count;
    r.llm_doc_fraction = st->doc_fraction;
    if (auto it = human.templates.find(t); it != human.templates.end()) {
      r.human_count = it->second.count;
      r.human_doc_fraction = it->second.doc_fraction;
    }
    if (r.human_doc_fraction < rarity_ratio * r.llm_doc_fraction) {
      r.representative_sequences = st->examples;
      out.push_back(std::move(r));
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TemplateReport& a, const TemplateReport& b) { return a.llm_count > b.llm_count; });
  return out;
}

// ---- lexical contrast --------------------------------------------------------

/// Lower-cased word tokens. Letters, digits and apostrophes form words; any
/// non-ASCII scalar value is treated as a letter.
inline std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::u32string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(utf8::encode(cur));
    cur.clear();
  };
  for (char32_t c : utf8::decode(text)) {
    if (c >= 0x80 || std::isalnum(static_cast<int>(c)) || c == U'\'' || c == 0x2019) {
      if (c < 0x80) c = static_cast<char32_t>(std::tolower(static_cast<int>(c)));
      if (c == 0x2019) c = U'\'';
      cur.push_back(c);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

inline bool contains_phrase(const std::vector<std::string>& doc, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > doc.size()) return false;
  return std::search(doc.begin(), doc.end(), phrase.begin(), phrase.end()) != doc.end();
}

struct LexicalHit {
  std::string term;
  double llm_doc_fraction = 0.0;
  double human_doc_fraction = 0.0;
  friend bool operator==(const LexicalHit&, const LexicalHit&) = default;
};

/// Unigrams plus configured phrases that are common in LLM text and rare in
/// human text, matched case-insensitively by whole words.
inline std::vector<LexicalHit> contrast_lexical(const std::vector<std::string>& llm_texts,
                                                const std::vector<std::string>& human_texts,
                                                double min_llm_fraction, double max_human_fraction,
                                                const std::vector<std::string>& phrases = {}) {
  if (llm_texts.empty()) throw IdiomError("LLM corpus is empty");
  for (double f : {min_llm_fraction, max_human_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw IdiomError("fractions must lie in [0,1]");
  }
  auto tokenize_all = [](const std::vector<std::string>& texts) {
    std::vector<std::vector<std::string>> docs;
    docs.reserve(texts.size());
    for (const auto& t : texts) docs.push_back(words(t));
    return docs;
  };
  auto llm_docs = tokenize_all(llm_texts);
  auto human_docs = tokenize_all(human_texts);

  std::map<std::string, std::size_t> llm_df;
  for (const auto& d : llm_docs) {
    for (const auto& w : std::set<std::string>(d.begin(), d.end())) ++llm_df[w];
  }
  std::map<std::string, std::vector<std::string>> terms;  // term -> word sequence
  for (const auto& [w, df] : llm_df) terms[w] = {w};
  for (const auto& p : phrases) {
    auto ws = words(p);
    if (ws.empty()) continue;
    terms[join(ws)] = ws;
  }

  auto fraction = [](const std::vector<std::vector<std::string>>& docs, const std::vector<std::string>& ws) {
    if (docs.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& d : docs) hits += contains_phrase(d, ws) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(docs.size());
  };

  std::vector<LexicalHit> out;
  for (const auto& [term, ws] : terms) {
    double lf;
    if (ws.size() == 1) {
      auto it = llm_df.find(ws.front());
      lf = it == llm_df.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(llm_docs.size());
    } else {
      lf = fraction(llm_docs, ws);
    }
    if (lf < min_llm_fraction) continue;
    double hf = fraction(human_docs, ws);
    if (hf > max_human_fraction) continue;
    out.push_back({term, lf, hf});
  }
  std::stable_sort(out.begin(), out.end(), [](const LexicalHit& a, const LexicalHit& b) {
    if (a.llm_doc_fraction != b.llm_doc_fraction) return a.llm_doc_fraction > b.llm_doc_fraction;
    return a.term < b.term;
  });
  return out;
}

/// One phrase per line; blank lines and `#` comments ignored.
inline std::vector<std::string> load_phrases(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IdiomError("cannot open phrase list '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    auto e = line.find_last_not_of(" \t");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

// ---- optional join with edit spans --------------------------------------------

/// Locates each token of a tagged paragraph in the source text, scanning
/// forward. Returns scalar-value [start,end) per token, or nothing if the
/// tokens cannot be aligned.
inline std::optional<std::vector<std::pair<std::size_t, std::size_t>>> align_tokens(
    const TaggedParagraph& para, std::string_view text) {
  auto hay = utf8::decode(text);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t cursor = 0;
  for (const auto& tok : para.tokens) {
    auto needle = utf8::decode(tok.surface);
    auto pos = hay.find(needle, cursor);
    if (pos == std::u32string::npos) return std::nullopt;
    out.emplace_back(pos, pos + needle.size());
    cursor = pos + needle.size();
  }
  return out;
}

/// Fraction of template occurrences intersecting any live edit span, joined
/// on source_id == record id. Occurrences in unalignable paragraphs are
/// skipped; returns nothing when no occurrence could be located.
inline std::optional<double> template_edit_rate(const Template& pattern,
                                                const std::vector<TaggedParagraph>& tagged,
                                                const std::vector<AnnotatedParagraph>& records) {
  std::map<std::string, const AnnotatedParagraph*> by_id;
  for (const auto& r : records) by_id[r.record.id] = &r;
  std::size_t total = 0, edited = 0;
  const std::size_t n = pattern.size();
  for (const auto& para : tagged) {
    auto it = by_id.find(para.source_id);
    if (it == by_id.end() || para.tokens.size() < n) continue;
    auto offsets = align_tokens(para, it->second->record.response);
    if (!offsets) continue;
    auto live = it->second->live_edits();
    for (std::size_t i = 0; i + n <= para.tokens.size(); ++i) {
      bool match = true;
      for (std::size_t k = 0; k < n && match; ++k) match = para.tokens[i + k].tag == pattern[k];
      if (!match) continue;
      ++total;
      const std::size_t s = (*offsets)[i].first, e = (*offsets)[i + n - 1].second;
      for (const auto& ed : live) {
        const bool hit = ed.start == ed.end ? (s < ed.start && ed.start < e) : (ed.start < e && s < ed.end);
        if (hit) {
          ++edited;
          break;
        }
      }
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(edited) / static_cast<double>(total);
}

// ---- reports -------------------------------------------------------------------

inline std::string surface(const std::vector<Token>& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += seq[i].surface;
  }
  return out;
}

inline std::string to_csv(const std::vector<TemplateReport>& reps) {
  std::ostringstream os;
  os << "template,llm_count,human_count,llm_doc_fraction,human_doc_fraction,edited_fraction,examples\n";
  for (const auto& r : reps) {
    std::string ex;
    for (std::size_t i = 0; i < r.representative_sequences.size(); ++i) {
      if (i) ex += " | ";
      ex += surface(r.representative_sequences[i]);
    }
    os << csv_escape(join(r.pattern)) << ',' << r.llm_count << ',' << r.human_count << ','
       << fixed(r.llm_doc_fraction, 6) << ',' << fixed(r.human_doc_fraction, 6) << ','
       << (r.edited_fraction ? fixed(*r.edited_fraction, 6) : std::string{}) << ',' << csv_escape(ex) << '\n';
  }
  return os.str();
}

inline ordered_json to_json(const std::vector<TemplateReport>& reps, int top_k, double rarity_ratio) {
  ordered_json j;
  j["top_k"] = top_k;
  j["rarity_ratio"] = rarity_ratio;
  j["rarity_rule"] = "human_doc_fraction < rarity_ratio * llm_doc_fraction";
  j["tie_break"] = "count desc, then tag sequence asc";
  j["templates"] = ordered_json::array();
  for (const auto& r : reps) {
    ordered_json t;
    t["template"] = join(r.pattern);
    t["llm_count"] = r.llm_count;
    t["human_count"] = r.human_count;
    t["llm_doc_fraction"] = r.llm_doc_fraction;
    t["human_doc_fraction"] = r.human_doc_fraction;
    t["edited_fraction"] = r.edited_fraction ? ordered_json(*r.edited_fraction) : ordered_json(nullptr);
    t["examples"] = ordered_json::array();
    for (const auto& seq : r.representative_sequences) t["examples"].push_back(surface(seq));
    j["templates"].push_back(std::move(t));
  }
  return j;
}

inline std::string to_csv(const std::vector<LexicalHit>& hits) {
  std::ostringstream os;
  os << "term,llm_doc_fraction,human_doc_fraction\n";
  for (const auto& h : hits) {
    os << csv_escape(h.term) << ',' << fixed(h.llm_doc_fraction, 6) << ',' << fixed(h.human_doc_fraction, 6)
       << '\n';
  }
  return os.str();
}

}  // namespace lamp::idiom
