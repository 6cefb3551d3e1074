#pragma once

// State behind the annotation service: task assignment with k-way redundancy,
// span edits with undo, quality scores, and shuffled preference triplets.
// Every mutation goes to an append-only JSONL event log first; the in-memory
// state is whatever replaying that log from empty produces.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "lamp/corpus.hpp"
#include "lamp/evalstats.hpp"
#include "lamp/utf8.hpp"
#include "lamp/util.hpp"

namespace lamp::annotsvc {

namespace fs = std::filesystem;
using evalstats::Condition;

class ServiceError : public std::runtime_error {
 public:
  enum class Code { BadRequest, NotFound, Conflict };
  ServiceError(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

inline ServiceError bad_request(const std::string& m) { return {ServiceError::Code::BadRequest, m}; }
inline ServiceError not_found(const std::string& m) { return {ServiceError::Code::NotFound, m}; }
inline ServiceError conflict(const std::string& m) { return {ServiceError::Code::Conflict, m}; }

/// The variants available for one paragraph in the preference study.
struct TripletSource {
  std::string paragraph_id;
  std::string llm_generated;
  std::string writer_edited;
  std::optional<std::string> llm_edited_oracle;
  std::optional<std::string> llm_edited_full;
  std::vector<std::string> seen_by;  // people who edited or read this paragraph elsewhere
};

inline TripletSource triplet_source_from_json(const json& j) {
  TripletSource t;
  try {
    t.paragraph_id = j.at("paragraph_id").get<std::string>();
    t.llm_generated = j.at("llm_generated").get<std::string>();
    t.writer_edited = j.at("writer_edited").get<std::string>();
    if (j.contains("llm_edited_oracle") && !j["llm_edited_oracle"].is_null()) {
      t.llm_edited_oracle = j["llm_edited_oracle"].get<std::string>();
    }
    if (j.contains("llm_edited_full") && !j["llm_edited_full"].is_null()) {
      t.llm_edited_full = j["llm_edited_full"].get<std::string>();
    }
    if (j.contains("seen_by")) t.seen_by = j["seen_by"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw CorpusError(std::string("malformed triplet source: ") + e.what());
  }
  if (!t.llm_edited_oracle && !t.llm_edited_full) {
    throw CorpusError("triplet source '" + t.paragraph_id + "' has neither an oracle nor a full edit");
  }
  return t;
}

struct Triplet {
  std::string id;
  std::string paragraph_id;
  std::array<Condition, 3> conditions;
  std::array<std::string, 3> texts;
  std::set<std::string> excluded;
};

/// One triplet per source. With alternation on, even-indexed sources use the
/// oracle edit and odd-indexed ones the full edit, falling back to whichever
/// exists.
inline std::vector<Triplet> build_triplets(const std::vector<TripletSource>& sources, bool alternate = true) {
  std::vector<Triplet> out;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& s = sources[i];
    bool use_oracle = alternate ? i % 2 == 0 : true;
    if (use_oracle && !s.llm_edited_oracle) use_oracle = false;
    if (!use_oracle && !s.llm_edited_full) use_oracle = true;
    Triplet t;
    t.paragraph_id = s.paragraph_id;
    t.id = s.paragraph_id + (use_oracle ? "/oracle" : "/full");
    t.conditions = {Condition::LLMGenerated, Condition::WriterEdited,
                    use_oracle ? Condition::LLMEditedOracle : Condition::LLMEditedFull};
    t.texts = {s.llm_generated, s.writer_edited, use_oracle ? *s.llm_edited_oracle : *s.llm_edited_full};
    t.excluded.insert(s.seen_by.begin(), s.seen_by.end());
    if (!ids.insert(t.id).second) throw CorpusError("duplicate triplet '" + t.id + "'");
    out.push_back(std::move(t));
  }
  return out;
}

/// Display permutation for (triplet, judge): slot i shows condition index
/// order[i]. Derived from a stable hash so it is reproducible without state.
inline std::array<int, 3> display_permutation(const std::string& triplet_id, const std::string& judge) {
  std::vector<int> v{0, 1, 2};
  seeded_shuffle(v, fnv1a64(judge, fnv1a64(triplet_id + '\x1f')));
  return {v[0], v[1], v[2]};
}

struct ServiceConfig {
  std::vector<ParagraphRecord> paragraphs;
  std::vector<std::string> annotators;
  std::vector<std::string> judges;
  std::set<std::string> redundant_ids;  // served to `redundancy` annotators
  int redundancy = 3;
  int batch_size = 0;  // paragraphs per annotator, 0 = unlimited
  std::vector<Triplet> triplets;
  int judges_per_triplet = 3;
  std::string log_path;
};

struct TaskView {
  ParagraphRecord record;
  std::vector<EditSpan> edits;
};

struct TripletView {
  std::string triplet_id;
  std::array<std::string, 3> texts;
};

class Store {
 public:
  /// Loads the configuration and replays the event log, if any. A torn final
  /// line (crash mid-write) is cut off; corruption anywhere else is an error.
  explicit Store(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    for (std::size_t i = 0; i < cfg_.paragraphs.size(); ++i) {
      if (!para_index_.emplace(cfg_.paragraphs[i].id, i).second) {
        throw CorpusError("duplicate paragraph id '" + cfg_.paragraphs[i].id + "'");
      }
    }
    for (const auto& id : cfg_.redundant_ids) {
      if (!para_index_.count(id)) throw CorpusError("redundant id '" + id + "' is not in the corpus");
    }
    for (std::size_t i = 0; i < cfg_.triplets.size(); ++i) triplet_index_.emplace(cfg_.triplets[i].id, i);
    annotators_.insert(cfg_.annotators.begin(), cfg_.annotators.end());
    judges_.insert(cfg_.judges.begin(), cfg_.judges.end());
    if (!cfg_.log_path.empty()) recover();
  }

  std::optional<TaskView> next_task(const std::string& annotator) {
    std::unique_lock lock(mu_);
    require_annotator(annotator);
    if (auto it = open_task_.find(annotator); it != open_task_.end()) return view(it->second, annotator);
    if (cfg_.batch_size > 0 && taken_[annotator] >= cfg_.batch_size) return std::nullopt;
    for (const auto& p : cfg_.paragraphs) {
      if (served_to(p.id) >= capacity(p.id)) continue;
      if (assignments_.count({p.id, annotator})) continue;
      ordered_json ev = {{"kind", "Assign"}, {"paragraph_id", p.id}};
      commit(annotator, std::move(ev));
      return view(p.id, annotator);
    }
    return std::nullopt;
  }

  /// Adds an edit to the annotator's paragraph. Returns the event seq.
  std::int64_t submit_edit(const std::string& annotator, const std::string& paragraph_id, std::size_t start,
                           std::size_t end, const std::string& replacement, const EditCategory& category,
                           const std::optional<std::string>& original = std::nullopt) {
    std::unique_lock lock(mu_);
    require_annotator(annotator);
    auto& a = open_assignment(annotator, paragraph_id);
    const auto& text = cfg_.paragraphs[para_index_.at(paragraph_id)].response;
    const auto len = utf8::length(text);
    if (start > end || end > len) {
      throw bad_request("offsets [" + std::to_string(start) + "," + std::to_string(end) +
                        ") invalid for paragraph of length " + std::to_string(len));
    }
    auto span_text = utf8::substr(text, start, end);
    if (original && *original != span_text) {
      throw bad_request("original text does not match the paragraph at [" + std::to_string(start) + "," +
                        std::to_string(end) + ")");
    }
    if (start == end && replacement.empty()) throw bad_request("edit changes nothing");
    for (const auto& e : a.edits) {
      if (!e.undone && edits_conflict(start, end, e.start, e.end)) {
        throw conflict("overlaps live edit [" + std::to_string(e.start) + "," + std::to_string(e.end) + ")");
      }
    }
    ordered_json ev = {{"kind", "AddEdit"},   {"paragraph_id", paragraph_id}, {"start", start},
                       {"end", end},          {"replacement", replacement},   {"category", category_to_json(category)}};
    return commit(annotator, std::move(ev));
  }

  /// Marks the most recent live edit undone. Returns the event seq.
  std::int64_t undo(const std::string& annotator, const std::string& paragraph_id) {
    std::unique_lock lock(mu_);
    require_annotator(annotator);
    auto& a = open_assignment(annotator, paragraph_id);
    bool any = false;
    for (const auto& e : a.edits) any = any || !e.undone;
    if (!any) throw conflict("nothing to undo");
    return commit(annotator, {{"kind", "Undo"}, {"paragraph_id", paragraph_id}});
  }

  /// Records IWQS/FWQS and closes the task.
  std::int64_t submit_scores(const std::string& annotator, const std::string& paragraph_id, int iwqs, int fwqs) {
    std::unique_lock lock(mu_);
    require_annotator(annotator);
    open_assignment(annotator, paragraph_id);
    try {
      validate_scores(paragraph_id, {iwqs, fwqs, annotator});
    } catch (const ValidationError& e) {
      throw bad_request(e.what());
    }
    return commit(annotator, {{"kind", "SubmitScores"}, {"paragraph_id", paragraph_id}, {"iwqs", iwqs}, {"fwqs", fwqs}});
  }

  std::optional<TripletView> next_triplet(const std::string& judge) {
    std::unique_lock lock(mu_);
    require_judge(judge);
    if (auto it = open_triplet_.find(judge); it != open_triplet_.end()) return triplet_view(it->second, judge);
    for (const auto& t : cfg_.triplets) {
      if (serve_count_[t.id] >= cfg_.judges_per_triplet) continue;
      if (served_.count({t.id, judge})) continue;
      if (has_seen(judge, t)) continue;
      const auto perm = display_permutation(t.id, judge);
      commit(judge, {{"kind", "Serve"}, {"triplet_id", t.id}, {"display", perm}});
      return triplet_view(t.id, judge);
    }
    return std::nullopt;
  }

  /// ranks[i] is the rank given to display slot i.
  std::int64_t submit_ranking(const std::string& judge, const std::string& triplet_id, const std::vector<int>& ranks) {
    std::unique_lock lock(mu_);
    require_judge(judge);
    try {
      evalstats::check_permutation(ranks, 3);
    } catch (const evalstats::StatsError& e) {
      throw bad_request(e.what());
    }
    auto it = served_.find({triplet_id, judge});
    if (it == served_.end()) throw conflict("triplet '" + triplet_id + "' was not served to '" + judge + "'");
    if (it->second.ranks) throw conflict("duplicate ranking for triplet '" + triplet_id + "' by '" + judge + "'");
    return commit(judge, {{"kind", "Ranking"}, {"triplet_id", triplet_id}, {"ranks", ranks}});
  }

  /// Edits in corpus schema, one record per (paragraph, annotator) that has
  /// edits or scores, ordered by (paragraph_id, first seq). Undone edits are
  /// kept and flagged.
  std::string export_edits() const {
    std::shared_lock lock(mu_);
    std::vector<const Assignment*> rows;
    for (const auto& [key, a] : assignments_) {
      if (!a.edits.empty() || a.scores) rows.push_back(&a);
    }
    std::sort(rows.begin(), rows.end(), [](const Assignment* x, const Assignment* y) {
      return std::tie(x->paragraph_id, x->assign_seq, x->annotator) <
             std::tie(y->paragraph_id, y->assign_seq, y->annotator);
    });
    std::string out;
    for (const auto* a : rows) {
      AnnotatedParagraph p;
      p.record = cfg_.paragraphs[para_index_.at(a->paragraph_id)];
      p.edits = a->edits;
      p.scores = a->scores;
      out += dump_line(to_json(p));
      out += '\n';
    }
    return out;
  }

  /// Rankings mapped back from display slots to condition labels.
  std::string export_rankings() const {
    std::shared_lock lock(mu_);
    std::vector<std::pair<std::pair<std::string, std::int64_t>, evalstats::PreferenceJudgment>> rows;
    for (const auto& [key, s] : served_) {
      if (!s.ranks) continue;
      rows.push_back({{key.first, s.rank_seq}, judgment_of(key.first, key.second, s)});
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return std::tie(a.first, a.second.judge) < std::tie(b.first, b.second.judge);
    });
    std::string out;
    for (const auto& [k, j] : rows) {
      out += evalstats::to_json(j).dump(-1, ' ', false);
      out += '\n';
    }
    return out;
  }

  std::vector<evalstats::PreferenceJudgment> judgments() const {
    std::shared_lock lock(mu_);
    std::vector<evalstats::PreferenceJudgment> out;
    for (const auto& [key, s] : served_) {
      if (s.ranks) out.push_back(judgment_of(key.first, key.second, s));
    }
    return out;
  }

  std::size_t event_count() const {
    std::shared_lock lock(mu_);
    return events_;
  }

  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Assignment {
    std::string paragraph_id;
    std::string annotator;
    std::int64_t assign_seq = 0;
    bool completed = false;
    std::vector<EditSpan> edits;
    std::optional<QualityScores> scores;
  };

  struct Served {
    std::array<int, 3> display{};
    std::optional<std::array<int, 3>> ranks;
    std::int64_t rank_seq = 0;
  };

  int capacity(const std::string& pid) const { return cfg_.redundant_ids.count(pid) ? cfg_.redundancy : 1; }

  int served_to(const std::string& pid) const {
    auto it = serve_paragraph_.find(pid);
    return it == serve_paragraph_.end() ? 0 : it->second;
  }

  void require_annotator(const std::string& a) const {
    if (!annotators_.count(a)) throw not_found("unknown annotator '" + a + "'");
  }

  void require_judge(const std::string& j) const {
    if (!judges_.count(j)) throw not_found("unknown judge '" + j + "'");
  }

  Assignment& open_assignment(const std::string& annotator, const std::string& pid) {
    auto it = assignments_.find({pid, annotator});
    if (it == assignments_.end()) throw conflict("paragraph '" + pid + "' is not assigned to '" + annotator + "'");
    if (it->second.completed) throw conflict("paragraph '" + pid + "' is already finished by '" + annotator + "'");
    return it->second;
  }

  bool has_seen(const std::string& judge, const Triplet& t) const {
    if (t.excluded.count(judge)) return true;
    return assignments_.count({t.paragraph_id, judge}) > 0;
  }

  TaskView view(const std::string& pid, const std::string& annotator) const {
    TaskView v;
    v.record = cfg_.paragraphs[para_index_.at(pid)];
    v.edits = assignments_.at({pid, annotator}).edits;
    return v;
  }

  TripletView triplet_view(const std::string& tid, const std::string& judge) const {
    const auto& t = cfg_.triplets[triplet_index_.at(tid)];
    const auto& s = served_.at({tid, judge});
    TripletView v{tid, {}};
    for (int i = 0; i < 3; ++i) v.texts[static_cast<std::size_t>(i)] = t.texts[static_cast<std::size_t>(s.display[static_cast<std::size_t>(i)])];
    return v;
  }

  evalstats::PreferenceJudgment judgment_of(const std::string& tid, const std::string& judge, const Served& s) const {
    const auto& t = cfg_.triplets[triplet_index_.at(tid)];
    evalstats::PreferenceJudgment j;
    j.triplet_id = tid;
    j.judge = judge;
    for (std::size_t slot = 0; slot < 3; ++slot) {
      const auto c = t.conditions[static_cast<std::size_t>(s.display[slot])];
      j.display_order.push_back(c);
      j.condition_of_rank[(*s.ranks)[slot]] = c;
    }
    return j;
  }

  /// Appends the event, then applies it. The caller has validated it.
  std::int64_t commit(const std::string& session, ordered_json ev) {
    const std::int64_t seq = seq_[session] + 1;
    ordered_json line;
    line["session"] = session;
    line["seq"] = seq;
    line["at"] = utc_timestamp();
    for (auto& [k, v] : ev.items()) line[k] = v;
    if (log_.is_open()) {
      log_ << line.dump(-1, ' ', false) << '\n';
      log_.flush();
      if (!log_) throw std::runtime_error("event log write failed");
    }
    apply(line);
    return seq;
  }

  void apply(const json& ev) {
    const auto session = ev.at("session").get<std::string>();
    const auto seq = ev.at("seq").get<std::int64_t>();
    if (seq != seq_[session] + 1) {
      throw CorpusError("event log: seq " + std::to_string(seq) + " out of order for session '" + session + "'");
    }
    seq_[session] = seq;
    ++events_;
    const auto kind = ev.at("kind").get<std::string>();
    if (kind == "Assign") {
      const auto pid = ev.at("paragraph_id").get<std::string>();
      Assignment a;
      a.paragraph_id = pid;
      a.annotator = session;
      a.assign_seq = seq;
      assignments_[{pid, session}] = std::move(a);
      open_task_[session] = pid;
      ++serve_paragraph_[pid];
      ++taken_[session];
    } else if (kind == "AddEdit") {
      const auto pid = ev.at("paragraph_id").get<std::string>();
      auto& a = assignments_.at({pid, session});
      const auto& text = cfg_.paragraphs[para_index_.at(pid)].response;
      EditSpan e;
      e.start = ev.at("start").get<std::size_t>();
      e.end = ev.at("end").get<std::size_t>();
      e.original = utf8::substr(text, e.start, e.end);
      e.replacement = ev.at("replacement").get<std::string>();
      e.category = category_from_json(ev.at("category"));
      e.annotator = session;
      e.order_index = seq;
      a.edits.push_back(std::move(e));
    } else if (kind == "Undo") {
      auto& a = assignments_.at({ev.at("paragraph_id").get<std::string>(), session});
      for (auto it = a.edits.rbegin(); it != a.edits.rend(); ++it) {
        if (!it->undone) {
          it->undone = true;
          break;
        }
      }
    } else if (kind == "SubmitScores") {
      const auto pid = ev.at("paragraph_id").get<std::string>();
      auto& a = assignments_.at({pid, session});
      a.scores = QualityScores{ev.at("iwqs").get<int>(), ev.at("fwqs").get<int>(), session};
      a.completed = true;
      open_task_.erase(session);
    } else if (kind == "Serve") {
      const auto tid = ev.at("triplet_id").get<std::string>();
      Served s;
      s.display = ev.at("display").get<std::array<int, 3>>();
      served_[{tid, session}] = s;
      open_triplet_[session] = tid;
      ++serve_count_[tid];
    } else if (kind == "Ranking") {
      const auto tid = ev.at("triplet_id").get<std::string>();
      auto& s = served_.at({tid, session});
      s.ranks = ev.at("ranks").get<std::array<int, 3>>();
      s.rank_seq = seq;
      if (open_triplet_[session] == tid) open_triplet_.erase(session);
    } else {
      throw CorpusError("event log: unknown event kind '" + kind + "'");
    }
  }

  void recover() {
    const fs::path path(cfg_.log_path);
    std::uintmax_t good_bytes = 0;
    if (fs::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      std::stringstream buf;
      buf << in.rdbuf();
      const std::string data = buf.str();
      std::size_t pos = 0;
      std::size_t line_no = 0;
      while (pos < data.size()) {
        const auto nl = data.find('\n', pos);
        ++line_no;
        if (nl == std::string::npos) break;  // torn tail: never acknowledged
        const std::string line = data.substr(pos, nl - pos);
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
          try {
            apply(json::parse(line));
          } catch (const std::exception& e) {
            throw CorpusError("event log '" + cfg_.log_path + "' line " + std::to_string(line_no) + ": " + e.what());
          }
        }
        pos = nl + 1;
        good_bytes = pos;
      }
      if (good_bytes < data.size()) fs::resize_file(path, good_bytes);
    }
    log_.open(path, std::ios::binary | std::ios::app);
    if (!log_) throw CorpusError("cannot open event log '" + cfg_.log_path + "' for appending");
  }

  ServiceConfig cfg_;
  std::map<std::string, std::size_t> para_index_;
  std::map<std::string, std::size_t> triplet_index_;
  std::set<std::string> annotators_;
  std::set<std::string> judges_;

  mutable std::shared_mutex mu_;
  std::ofstream log_;
  std::size_t events_ = 0;
  std::map<std::string, std::int64_t> seq_;
  std::map<std::pair<std::string, std::string>, Assignment> assignments_;  // (paragraph, annotator)
  std::map<std::string, std::string> open_task_;
  std::map<std::string, int> serve_paragraph_;
  std::map<std::string, int> taken_;
  std::map<std::pair<std::string, std::string>, Served> served_;  // (triplet, judge)
  std::map<std::string, std::string> open_triplet_;
  std::map<std::string, int> serve_count_;
};

/// Reads a service configuration file. Relative paths inside it are resolved
/// against the file's directory.
///
///   {"corpus": "paragraphs.jsonl", "annotators": [...], "judges": [...],
///    "redundancy": 3, "redundant_ids": [...], "batch_size": 25,
///    "triplets": "triplets.jsonl", "alternate": true,
///    "judges_per_triplet": 3, "log": "events.jsonl"}
inline ServiceConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open service config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CorpusError("service config '" + path + "': " + e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  ServiceConfig cfg;
  try {
    for (auto& p : load_corpus(resolve(j.at("corpus").get<std::string>()))) cfg.paragraphs.push_back(p.record);
    cfg.annotators = j.value("annotators", std::vector<std::string>{});
    cfg.judges = j.value("judges", std::vector<std::string>{});
    cfg.redundancy = j.value("redundancy", 3);
    for (const auto& id : j.value("redundant_ids", std::vector<std::string>{})) cfg.redundant_ids.insert(id);
    cfg.batch_size = j.value("batch_size", 0);
    cfg.judges_per_triplet = j.value("judges_per_triplet", 3);
    if (j.contains("triplets")) {
      std::ifstream tin(resolve(j["triplets"].get<std::string>()));
      if (!tin) throw CorpusError("cannot open triplet file '" + j["triplets"].get<std::string>() + "'");
      std::vector<TripletSource> sources;
      std::string line;
      while (std::getline(tin, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        sources.push_back(triplet_source_from_json(json::parse(line)));
      }
      cfg.triplets = build_triplets(sources, j.value("alternate", true));
    }
    if (j.contains("log")) cfg.log_path = resolve(j["log"].get<std::string>());
  } catch (const json::exception& e) {
    throw CorpusError("service config '" + path + "': " + e.what());
  }
  if (cfg.redundancy < 1) throw CorpusError("redundancy must be at least 1");
  if (cfg.judges_per_triplet < 1) throw CorpusError("judges_per_triplet must be at least 1");
  return cfg;
}

}  // namespace lamp::annotsvc
