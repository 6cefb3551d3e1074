// lamp: command-line front end for the corpus analytics, the generation and
// editing pipeline, preference statistics and the annotation service.
//
// Exit status: 0 success, 1 runtime error, 2 usage error.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lamp/annotsvc.hpp"
#include "lamp/annotsvc_http.hpp"
#include "lamp/corpus.hpp"
#include "lamp/editops.hpp"
#include "lamp/evalstats.hpp"
#include "lamp/idiom.hpp"
#include "lamp/llmclient.hpp"
#include "lamp/llmclient_http.hpp"
#include "lamp/pipeline.hpp"
#include "lamp/report.hpp"
#include "lamp/spanmetrics.hpp"

namespace fs = std::filesystem;
using namespace lamp;

namespace {

struct Common {
  std::string out = ".";
  std::uint64_t seed = 13;
  std::size_t jobs = 1;
};

struct ProviderFlags {
  std::string provider;
  std::string fixture;
  std::string model;
};

fs::path out_path(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  return fs::path(c.out) / name;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + p.string() + "'");
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
  }
  return out;
}

std::shared_ptr<llm::Provider> provider_from(const ProviderFlags& f) {
  auto cfg = llm::config_from_env();
  if (!f.provider.empty()) cfg.mode = *llm::parse_mode(f.provider);
  if (!f.fixture.empty()) cfg.fixture_path = f.fixture;
  return llm::make_provider(cfg);
}

std::string model_from(const ProviderFlags& f) {
  if (!f.model.empty()) return f.model;
  if (const char* m = std::getenv("LAMP_MODEL"); m && *m) return m;
  return "gpt-4o";
}

void add_provider_flags(CLI::App* cmd, ProviderFlags& f) {
  cmd->add_option("--provider", f.provider, "LLM provider mode")->check(CLI::IsMember({"live", "record", "replay"}));
  cmd->add_option("--fixture", f.fixture, "record/replay fixture (JSONL)");
  cmd->add_option("--model", f.model, "model name (default: $LAMP_MODEL or gpt-4o)");
}

std::string pct(double x) { return fixed(100.0 * x, 1) + "%"; }

// ---- commands ---------------------------------------------------------------------

int run_stats(const Common& c, const std::string& input, double threshold) {
  auto corpus = load_corpus(input, {.unique_ids = false});
  editops::TrigramCosineScorer scorer;
  auto st = editops::corpus_stats(corpus, {.scorer = &scorer, .meaning_threshold = threshold});
  write_file(out_path(c, "stats.json"), editops::to_json(st).dump(2, ' ', false) + "\n");
  write_file(out_path(c, "distances.csv"), editops::to_csv(st));
  using editops::EditOperation;
  std::cout << st.n_paragraphs << " paragraphs, " << st.n_edits << " edits; insertion "
            << pct(st.op_distribution[EditOperation::Insertion]) << ", deletion "
            << pct(st.op_distribution[EditOperation::Deletion]) << ", replacement "
            << pct(st.op_distribution[EditOperation::Replacement]) << "\n";
  return 0;
}

int run_precision(const Common& c, const std::string& pred, const std::string& gold) {
  auto cp = spanmetrics::corpus_precision(load_corpus(pred), load_corpus(gold));
  write_file(out_path(c, "precision.csv"), spanmetrics::to_csv(cp));
  std::cout << "general " << fixed(cp.mean_general, 2) << " categorical " << fixed(cp.mean_categorical, 2) << " ("
            << cp.rows.size() << " paragraphs)\n";
  return 0;
}

int run_agreement(const Common& c, const std::string& input, bool categorical) {
  auto ca = spanmetrics::corpus_agreement(load_corpus(input, {.unique_ids = false}));
  std::ostringstream csv;
  csv << "id,general,categorical,ordered_pairs\n";
  for (const auto& [id, a] : ca.rows) {
    csv << csv_escape(id) << ',' << fixed(a.general, 6) << ',' << fixed(a.categorical, 6) << ',' << a.ordered_pairs
        << '\n';
  }
  write_file(out_path(c, "agreement.csv"), csv.str());
  if (categorical) {
    std::cout << "categorical agreement " << fixed(ca.mean_categorical, 2);
  } else {
    std::cout << "general agreement " << fixed(ca.mean_general, 2);
  }
  std::cout << " over " << ca.rows.size() << " paragraphs\n";
  return 0;
}

int run_mine_templates(const Common& c, const std::string& llm_path, const std::string& human_path, int top_k,
                       double ratio) {
  auto llm_t = idiom::extract_templates(idiom::load_tagged(llm_path), {5});
  auto human_t = idiom::extract_templates(idiom::load_tagged(human_path), {5});
  auto reps = idiom::contrast_templates(llm_t, human_t, top_k, ratio);
  write_file(out_path(c, "templates.csv"), idiom::to_csv(reps));
  write_file(out_path(c, "templates.json"), idiom::to_json(reps, top_k, ratio).dump(2, ' ', false) + "\n");
  std::cout << reps.size() << " of the top " << top_k << " LLM templates are rare in human text\n";
  return 0;
}

int run_mine_lexical(const Common& c, const std::string& llm_path, const std::string& human_path, double min_llm,
                     double max_human, const std::string& phrases) {
  auto hits = idiom::contrast_lexical(read_lines(llm_path), read_lines(human_path), min_llm, max_human,
                                      phrases.empty() ? std::vector<std::string>{} : idiom::load_phrases(phrases));
  write_file(out_path(c, "lexical.csv"), idiom::to_csv(hits));
  std::cout << hits.size() << " terms common in LLM text and rare in human text\n";
  return 0;
}

pipeline::Pipeline make_pipeline(const Common& c, const ProviderFlags& pf,
                                 const std::vector<AnnotatedParagraph>& corpus) {
  pipeline::PipelineOptions opts;
  opts.model = model_from(pf);
  opts.jobs = c.jobs;
  return pipeline::Pipeline(provider_from(pf), pipeline::ExemplarBank::from_corpus(corpus, c.seed), opts);
}

int run_backtranslate(const Common& c, const ProviderFlags& pf, const std::string& input) {
  auto corpus = load_corpus(input);
  auto pipe = make_pipeline(c, pf, {});
  std::size_t n = 0;
  pipeline::parallel_for(corpus.size(), c.jobs, [&](std::size_t i) {
    auto& r = corpus[i].record;
    if (!r.seed_paragraph) return;
    r.instruction = pipe.backtranslate_instruction(*r.seed_paragraph);
  });
  std::ostringstream os;
  for (const auto& p : corpus) {
    if (p.record.seed_paragraph) ++n;
    os << dump_line(to_json(p)) << '\n';
  }
  write_file(out_path(c, "backtranslated.jsonl"), os.str());
  std::cout << n << " instructions written\n";
  return 0;
}

int run_generate(const Common& c, const ProviderFlags& pf, const std::string& input) {
  auto corpus = load_corpus(input);
  auto pipe = make_pipeline(c, pf, {});
  const auto model = model_from(pf);
  pipeline::parallel_for(corpus.size(), c.jobs, [&](std::size_t i) {
    auto& r = corpus[i].record;
    auto venue = r.venue.empty() ? pipeline::venue_for(r.genre) : pipeline::parse_venue(r.venue);
    r.response = pipe.generate_response(r.instruction, venue);
    r.generator = model;
    corpus[i].edits.clear();
    corpus[i].scores.reset();
  });
  std::ostringstream os;
  for (const auto& p : corpus) os << dump_line(to_json(p)) << '\n';
  write_file(out_path(c, "generated.jsonl"), os.str());
  std::cout << corpus.size() << " responses written\n";
  return 0;
}

std::vector<const AnnotatedParagraph*> test_records(const std::vector<AnnotatedParagraph>& corpus) {
  std::vector<const AnnotatedParagraph*> out;
  for (const auto& p : corpus) {
    if (p.record.split == Split::Test) out.push_back(&p);
  }
  return out;
}

int run_detect(const Common& c, const ProviderFlags& pf, const std::string& input, int shots) {
  auto corpus = load_corpus(input, {.unique_ids = false});
  auto pipe = make_pipeline(c, pf, corpus);
  auto targets = test_records(corpus);
  std::vector<pipeline::DetectionResult> results(targets.size());
  pipeline::parallel_for(targets.size(), c.jobs,
                         [&](std::size_t i) { results[i] = pipe.detect_spans(targets[i]->record.response, shots); });
  std::ostringstream os;
  std::size_t spans = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ordered_json j;
    j["id"] = targets[i]->record.id;
    j["shots"] = shots;
    j["spans"] = ordered_json::array();
    for (const auto& s : results[i].spans) {
      j["spans"].push_back({{"start", s.resolved->first},
                            {"end", s.resolved->second},
                            {"category", category_to_json(s.category)},
                            {"text", s.raw_span},
                            {"resolution", std::string(pipeline::to_string(*s.resolution))}});
    }
    spans += results[i].spans.size();
    j["diagnostics"] = results[i].diagnostics;
    os << dump_line(j) << '\n';
  }
  write_file(out_path(c, "detected.jsonl"), os.str());
  std::cout << spans << " spans detected in " << targets.size() << " paragraphs\n";
  return 0;
}

pipeline::OracleSpans oracle_spans(const AnnotatedParagraph& p) {
  pipeline::OracleSpans o;
  auto live = p.live_edits();
  std::sort(live.begin(), live.end(), [](const EditSpan& a, const EditSpan& b) { return a.start < b.start; });
  for (const auto& e : live) {
    if (e.start == e.end || e.category.is_other()) continue;
    o.ranges.emplace_back(e.start, e.end);
    o.categories.push_back(e.category);
  }
  return o;
}

int run_rewrite(const Common& c, const ProviderFlags& pf, const std::string& input) {
  auto corpus = load_corpus(input, {.unique_ids = false});
  auto pipe = make_pipeline(c, pf, corpus);
  struct Job {
    const AnnotatedParagraph* p;
    pipeline::SpanPrediction span;
  };
  std::vector<Job> jobs;
  for (const auto* p : test_records(corpus)) {
    auto o = oracle_spans(*p);
    for (std::size_t i = 0; i < o.ranges.size(); ++i) {
      pipeline::SpanPrediction s;
      s.resolved = o.ranges[i];
      s.category = o.categories[i];
      s.raw_span = utf8::substr(p->record.response, o.ranges[i].first, o.ranges[i].second);
      jobs.push_back({p, s});
    }
  }
  std::vector<pipeline::RewriteResult> results(jobs.size());
  pipeline::parallel_for(jobs.size(), c.jobs,
                         [&](std::size_t i) { results[i] = pipe.rewrite_span(jobs[i].p->record.response, jobs[i].span); });
  std::ostringstream os;
  std::size_t violations = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    ordered_json j;
    j["id"] = jobs[i].p->record.id;
    j["start"] = jobs[i].span.resolved->first;
    j["end"] = jobs[i].span.resolved->second;
    j["category"] = category_to_json(jobs[i].span.category);
    j["original"] = jobs[i].span.raw_span;
    j["rewrite"] = results[i].text;
    j["boundary_ok"] = results[i].boundary.ok();
    if (!results[i].boundary.ok()) ++violations;
    os << dump_line(j) << '\n';
  }
  write_file(out_path(c, "rewrites.jsonl"), os.str());
  std::cout << jobs.size() << " spans rewritten, " << violations << " boundary warnings\n";
  return 0;
}

int run_edit(const Common& c, const ProviderFlags& pf, const std::string& input, const std::string& mode, int shots) {
  if (mode == "full" && !pipeline::is_allowed_shots(shots)) {
    throw CLI::ValidationError("--shots", "must be 2, 5 or 25");
  }
  auto corpus = load_corpus(input, {.unique_ids = false});
  auto pipe = make_pipeline(c, pf, corpus);
  auto targets = test_records(corpus);
  std::vector<pipeline::EditedParagraph> results(targets.size());
  // Paragraph-level work is sequential here; rewrites within a paragraph use --jobs.
  for (std::size_t i = 0; i < targets.size(); ++i) {
    pipeline::EditRequest req = pipeline::FullDetection{shots};
    if (mode == "oracle") req = oracle_spans(*targets[i]);
    results[i] = pipe.edit_paragraph(targets[i]->record.id, targets[i]->record.response, req);
  }
  std::ostringstream os;
  std::size_t edits = 0, violations = 0;
  for (const auto& r : results) {
    edits += r.edits.size();
    violations += r.boundary_violations;
    os << dump_line(pipeline::to_json(r)) << '\n';
  }
  const auto path = out_path(c, "edited.jsonl");
  write_file(path, os.str());
  std::cout << results.size() << " paragraphs edited (" << mode << "), " << edits << " edits, " << violations
            << " boundary warnings -> " << path.string() << "\n";
  return 0;
}

int run_prefs(const Common& c, const std::string& input) {
  std::vector<evalstats::PreferenceJudgment> js;
  for (const auto& line : read_lines(input)) js.push_back(evalstats::judgment_from_json(json::parse(line)));
  if (js.empty()) throw std::runtime_error("no judgments");
  using evalstats::Condition;
  auto means = evalstats::average_ranks(js);
  ordered_json out;
  out["n_judgments"] = js.size();
  out["average_rank"] = ordered_json::object();
  for (const auto& [cond, m] : means) out["average_rank"][std::string(evalstats::to_string(cond))] = m;
  try {
    auto ag = evalstats::mean_agreement(js);
    out["kendalls_w"] = {{"mean", ag.mean_w}, {"aggregation", ag.aggregation}, {"n_triplets", ag.per_triplet_w.size()}};
  } catch (const evalstats::StatsError& e) {
    out["kendalls_w"] = {{"error", e.what()}};
  }
  out["wilcoxon"] = ordered_json::array();
  const std::pair<Condition, Condition> pairs[] = {
      {Condition::WriterEdited, Condition::LLMGenerated},      {Condition::LLMEditedOracle, Condition::LLMGenerated},
      {Condition::LLMEditedFull, Condition::LLMGenerated},     {Condition::WriterEdited, Condition::LLMEditedOracle},
      {Condition::WriterEdited, Condition::LLMEditedFull},
  };
  for (const auto& [a, b] : pairs) {
    auto pr = evalstats::paired_ranks(js, a, b);
    if (pr.empty()) continue;
    auto w = evalstats::wilcoxon_signed_rank(pr);
    out["wilcoxon"].push_back({{"a", std::string(evalstats::to_string(a))},
                               {"b", std::string(evalstats::to_string(b))},
                               {"n_pairs", pr.size()},
                               {"n_used", w.n_used},
                               {"statistic", w.statistic},
                               {"p_value", w.p_value},
                               {"exact", w.exact},
                               {"zero_handling", w.zero_handling}});
  }
  write_file(out_path(c, "prefs.json"), out.dump(2, ' ', false) + "\n");
  std::cout << js.size() << " judgments;";
  for (const auto& [cond, m] : means) std::cout << ' ' << evalstats::to_string(cond) << ' ' << fixed(m, 2);
  std::cout << "\n";
  return 0;
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_serve(const std::string& config, const std::string& host, int port, const std::string& ui) {
  annotsvc::Store store(annotsvc::load_config(config));
  httplib::Server server;
  annotsvc::mount(server, store, ui);
  int bound = port;
  if (port == 0) {
    bound = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on " << host << ":" << bound << " (" << store.event_count() << " events replayed)"
            << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LAMP corpus analytics and editing pipeline", "lamp"};
  app.require_subcommand(1);
  Common common;
  ProviderFlags pf;

  auto common_flags = [&](CLI::App* cmd) {
    cmd->add_option("--out", common.out, "output directory");
    cmd->add_option("--seed", common.seed, "seed for exemplar sampling and shuffles");
    cmd->add_option("--jobs", common.jobs, "worker cap")->check(CLI::PositiveNumber);
  };

  std::string input, pred, gold, llm_path, human_path, phrases, mode = "full", config, host = "127.0.0.1", ui;
  double threshold = editops::kDefaultMeaningThreshold, ratio = idiom::kDefaultRarityRatio;
  double min_llm = 0.05, max_human = 0.01;
  int top_k = 50, shots = 5, port = 8080;
  bool categorical = false;

  auto* stats = app.add_subcommand("stats", "edit operation, category and distance statistics");
  common_flags(stats);
  stats->add_option("corpus", input)->required();
  stats->add_option("--threshold", threshold, "meaning-preservation threshold")->check(CLI::Range(0.0, 1.0));

  auto* prec = app.add_subcommand("precision", "span precision of predictions against gold edits");
  common_flags(prec);
  prec->add_option("--pred", pred)->required();
  prec->add_option("--gold", gold)->required();

  auto* agree = app.add_subcommand("agreement", "pairwise span agreement between annotators");
  common_flags(agree);
  agree->add_option("corpus", input)->required();
  agree->add_flag("--categorical", categorical, "report categorical rather than general agreement");

  auto* mt = app.add_subcommand("mine-templates", "POS 5-gram templates over-represented in LLM text");
  common_flags(mt);
  mt->add_option("--llm", llm_path, "tagged LLM corpus (TSV)")->required();
  mt->add_option("--human", human_path, "tagged human corpus (TSV)")->required();
  mt->add_option("--top-k", top_k)->check(CLI::PositiveNumber);
  mt->add_option("--rarity-ratio", ratio)->check(CLI::Range(0.0, 1.0));

  auto* ml = app.add_subcommand("mine-lexical", "words and phrases over-represented in LLM text");
  common_flags(ml);
  ml->add_option("--llm", llm_path, "LLM paragraphs, one per line")->required();
  ml->add_option("--human", human_path, "human paragraphs, one per line")->required();
  ml->add_option("--phrases", phrases, "extra phrase list");
  ml->add_option("--min-llm", min_llm)->check(CLI::Range(0.0, 1.0));
  ml->add_option("--max-human", max_human)->check(CLI::Range(0.0, 1.0));

  auto* bt = app.add_subcommand("backtranslate", "instructions from seed paragraphs");
  auto* gen = app.add_subcommand("generate", "venue-styled responses to instructions");
  auto* det = app.add_subcommand("detect", "few-shot span detection on the test split");
  auto* rw = app.add_subcommand("rewrite", "rewrite writer-selected spans on the test split");
  auto* ed = app.add_subcommand("edit", "edit the test split (oracle or full)");
  for (auto* cmd : {bt, gen, det, rw, ed}) {
    common_flags(cmd);
    add_provider_flags(cmd, pf);
    cmd->add_option("corpus", input)->required();
  }
  det->add_option("--shots", shots)->check(CLI::IsMember({2, 5, 25}));
  ed->add_option("--shots", shots)->check(CLI::IsMember({2, 5, 25}));
  ed->add_option("--mode", mode)->check(CLI::IsMember({"oracle", "full"}));

  auto* prefs = app.add_subcommand("prefs", "average ranks, Kendall's W and Wilcoxon tests");
  common_flags(prefs);
  prefs->add_option("judgments", input)->required();

  auto* serve = app.add_subcommand("serve", "run the annotation service");
  serve->add_option("--config", config, "service configuration (JSON)")->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port, "0 picks a free port")->check(CLI::Range(0, 65535));
  serve->add_option("--ui", ui, "directory with the built UI");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*stats) return run_stats(common, input, threshold);
    if (*prec) return run_precision(common, pred, gold);
    if (*agree) return run_agreement(common, input, categorical);
    if (*mt) return run_mine_templates(common, llm_path, human_path, top_k, ratio);
    if (*ml) return run_mine_lexical(common, llm_path, human_path, min_llm, max_human, phrases);
    if (*bt) return run_backtranslate(common, pf, input);
    if (*gen) return run_generate(common, pf, input);
    if (*det) return run_detect(common, pf, input, shots);
    if (*rw) return run_rewrite(common, pf, input);
    if (*ed) return run_edit(common, pf, input, mode, shots);
    if (*prefs) return run_prefs(common, input);
    if (*serve) return run_serve(config, host, port, ui);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "lamp: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "lamp: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
