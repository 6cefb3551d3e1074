#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "lamp/llmclient_http.hpp"
#include "lamp/pipeline.hpp"
#include "test_support.hpp"

using namespace lamp;
using namespace lamp::pipeline;

namespace {

llm::CompletionRequest request(std::string user, double temperature = 0.0) {
  llm::CompletionRequest r;
  r.model = "m";
  r.user = std::move(user);
  r.temperature = temperature;
  return r;
}

/// Answers every request with a fixed reply and counts calls.
class CannedProvider final : public llm::Provider {
 public:
  explicit CannedProvider(std::string reply) : reply_(std::move(reply)) {}
  std::string name() const override { return "canned"; }
  std::string complete(const llm::CompletionRequest& r) override {
    ++calls;
    last = r;
    return reply_;
  }
  std::atomic<int> calls{0};
  llm::CompletionRequest last;

 private:
  std::string reply_;
};

/// In-process chat-completions stub: fails with `status` for the first
/// `failures` requests, then answers.
class StubServer {
 public:
  StubServer(int status, int failures) {
    server_.Post("/v1/chat/completions", [this, status, failures](const httplib::Request& req, httplib::Response& res) {
      const int n = ++hits;
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      if (n <= failures) {
        res.status = status;
        res.set_content("{\"error\":\"busy\"}", "application/json");
        return;
      }
      res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"hello"}}]})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::atomic<int> hits{0};
  std::string last_body, last_auth;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

llm::RetryPolicy fast_retry() {
  llm::RetryPolicy p;
  p.initial_backoff = std::chrono::milliseconds(5);
  return p;
}

}  // namespace

// ---- provider layer ----------------------------------------------------------------

TEST(LlmClient, HashIsCanonicalAndSensitive) {
  auto a = request("hi");
  EXPECT_EQ(llm::canonical_form(a), R"({"max_tokens":1024,"model":"m","system":null,"temperature":0.0,"user":"hi"})");
  EXPECT_EQ(llm::request_hash(a).size(), 64u);
  EXPECT_EQ(llm::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  auto b = a;
  b.system = "";
  EXPECT_NE(llm::request_hash(a), llm::request_hash(b)) << "absent and empty system prompts differ";
  b = a;
  b.temperature = 0.7;
  EXPECT_NE(llm::request_hash(a), llm::request_hash(b));
}

TEST(LlmClient, ReplayMissIsAHardError) {
  llm::ReplayProvider replay;
  replay.add({llm::request_hash(request("known")), "yes", "x", "", std::nullopt});
  EXPECT_EQ(replay.complete(request("known")), "yes");
  try {
    replay.complete(request("unknown"));
    FAIL();
  } catch (const llm::FixtureMiss& e) {
    EXPECT_EQ(e.hash(), llm::request_hash(request("unknown")));
  }
  EXPECT_THROW(replay.complete(request("")), llm::ProviderError);
}

TEST(LlmClient, RecordThenReplay) {
  fixtures::TempDir dir;
  const auto path = (dir / "fx.jsonl").string();
  auto inner = std::make_shared<CannedProvider>("caf\xC3\xA9 \"quoted\"\nline");
  llm::RecordingProvider rec(inner, std::make_shared<llm::FixtureWriter>(path));
  auto out = rec.complete(request("q1"));
  rec.complete(request("q2", 0.7));
  auto replay = llm::ReplayProvider::from_file(path);
  EXPECT_EQ(replay.size(), 2u);
  EXPECT_EQ(replay.complete(request("q1")), out);
  EXPECT_EQ(replay.complete(request("q2", 0.7)), out);
  EXPECT_THROW(replay.complete(request("q2")), llm::FixtureMiss);
  auto first = json::parse(fixtures::read_file(path).substr(0, fixtures::read_file(path).find('\n')));
  EXPECT_EQ(first["provider_name"], "canned");
  EXPECT_EQ(first["request"]["user"], "q1");
}

TEST(LlmClient, HttpRetriesTransientFailures) {
  StubServer stub(503, 2);
  llm::HttpProvider p(stub.base_url(), "sk-test", fast_retry());
  EXPECT_EQ(p.complete(request("hi")), "hello");
  EXPECT_EQ(stub.hits.load(), 3);
  EXPECT_EQ(stub.last_auth, "Bearer sk-test");
  auto body = json::parse(stub.last_body);
  EXPECT_EQ(body["messages"][0]["content"], "hi");
  EXPECT_EQ(body["model"], "m");
}

TEST(LlmClient, HttpGivesUpAfterThreeAttempts) {
  StubServer stub(429, 10);
  llm::HttpProvider p(stub.base_url(), "k", fast_retry());
  EXPECT_THROW(p.complete(request("hi")), llm::ProviderError);
  EXPECT_EQ(stub.hits.load(), 3);
}

TEST(LlmClient, HttpDoesNotRetryClientErrors) {
  StubServer stub(400, 10);
  llm::HttpProvider p(stub.base_url(), "k", fast_retry());
  EXPECT_THROW(p.complete(request("hi")), llm::ProviderError);
  EXPECT_EQ(stub.hits.load(), 1);
}

TEST(LlmClient, MalformedCompletionBody) {
  EXPECT_THROW(llm::HttpProvider::extract_content("{}"), llm::ProviderError);
  EXPECT_THROW(llm::HttpProvider::extract_content("not json"), llm::ProviderError);
  EXPECT_EQ(llm::HttpProvider::extract_content(R"({"choices":[{"message":{"content":"x"}}]})"), "x");
}

TEST(LlmClient, ProviderConfigErrors) {
  llm::ProviderConfig cfg;
  cfg.mode = llm::ProviderMode::Replay;
  EXPECT_THROW(llm::make_provider(cfg), llm::ProviderError);
  cfg.mode = llm::ProviderMode::Live;
  EXPECT_THROW(llm::make_provider(cfg), llm::ProviderError);
  EXPECT_FALSE(llm::parse_mode("offline").has_value());
}

// ---- prompts -----------------------------------------------------------------------

TEST(Prompts, BacktranslationAndResponse) {
  auto q = build_backtranslation_prompt("The paragraph.");
  EXPECT_NE(q.find("The paragraph."), std::string::npos);
  EXPECT_EQ(q.find("{{"), std::string::npos);
  EXPECT_THROW(build_backtranslation_prompt(""), PipelineError);
  for (auto v : kAllVenues) {
    auto r = build_response_prompt("Write about rain.", v);
    EXPECT_NE(r.find("Write about rain."), std::string::npos);
    EXPECT_EQ(r.find("{{"), std::string::npos);
    EXPECT_EQ(parse_venue(to_string(v)), v);
  }
  EXPECT_THROW(parse_venue("Blog"), PipelineError);
}

TEST(Prompts, DetectionPromptShotsAndLayout) {
  std::vector<DetectionExemplar> ex(5, DetectionExemplar{"Ex para.", {{"Ex", EditCategory::Kind::Cliche}}});
  auto p = build_detection_prompt(ex, 5, "Target.");
  EXPECT_NE(p.find("Example 5:\nInput Text\nEx para.\n\nOutput:\n[{\"span\":\"Ex\",\"category\":\"Cliche\"}]"),
            std::string::npos);
  EXPECT_EQ(p.find("Example 6:"), std::string::npos);
  EXPECT_TRUE(p.ends_with("Paragraph:\n\nTarget."));
  EXPECT_THROW(build_detection_prompt(ex, 3, "Target."), PipelineError);
  EXPECT_THROW(build_detection_prompt(ex, 25, "Target."), PipelineError);
}

TEST(Prompts, RewritePromptHighlightsSpan) {
  std::vector<RewriteExemplar> ex = {{"A b c.", 2, 3, "b", "B"}};
  auto p = build_rewrite_prompt(EditCategory::Kind::Cliche, ex, "One two three.", 4, 7);
  EXPECT_TRUE(p.ends_with("Paragraph: One <span>two</span> three.\nOriginal Span: \"two\"\nEdited Span:"));
  EXPECT_NE(p.find("Paragraph: A <span>b</span> c.\nOriginal Span: \"b\"\nEdited Span: \"B\""), std::string::npos);
  EXPECT_THROW(build_rewrite_prompt(EditCategory::other("Tone"), ex, "x", 0, 1), PipelineError);
}

// ---- output parsing ------------------------------------------------------------------

TEST(DetectionParsing, LabelsAndMalformedItems) {
  EXPECT_EQ(match_category_label("Clich\xC3\xA9"), EditCategory(EditCategory::Kind::Cliche));
  EXPECT_EQ(match_category_label("Unnecessary/Redundant Exposition"),
            EditCategory(EditCategory::Kind::UnnecessaryRedundantExposition));
  EXPECT_EQ(match_category_label("tense consistency"), EditCategory(EditCategory::Kind::TenseInconsistency));
  EXPECT_FALSE(match_category_label("Tone").has_value());

  const std::string para = "The sky was blue. The sky was blue again.";
  auto r = parse_detection_output(
      R"(Sure! Here you go: [{"span":"The sky was blue","category":"Cliche"},)"
      R"({"span":"The sky was blue","category":"Purple Prose"},{"span":"x"},)"
      R"({"span":"nowhere at all","category":"Cliche"},{"span":"blue","category":"Tone"}] thanks)",
      para);
  ASSERT_EQ(r.spans.size(), 2u);
  EXPECT_EQ(*r.spans[0].resolved, std::make_pair(std::size_t{0}, std::size_t{16}));
  EXPECT_EQ(*r.spans[1].resolved, std::make_pair(std::size_t{18}, std::size_t{34})) << "second occurrence";
  ASSERT_EQ(r.diagnostics.size(), 3u);
  EXPECT_NE(r.diagnostics[0].find("item 2"), std::string::npos);
  EXPECT_NE(r.diagnostics[1].find("not found"), std::string::npos);
  EXPECT_NE(r.diagnostics[2].find("unknown category 'Tone'"), std::string::npos);
  EXPECT_THROW(parse_detection_output("no array here", para), MalformedOutput);
}

TEST(DetectionParsing, WhitespaceAndLcsFallbacks) {
  const std::string para = "She  walked\nhome slowly, ticking\xE2\x80\xA6 off the hours.";
  auto r = parse_detection_output(
      R"([{"span":"She walked home","category":"Cliche"},{"span":"ticking... off","category":"Purple Prose"}])", para);
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].resolution, Resolution::WhitespaceNormalized);
  EXPECT_EQ(utf8::substr(para, r.spans[0].resolved->first, r.spans[0].resolved->second), "She  walked\nhome");
  // "ticking... off" shares only "ticking" / " off" with the text; below coverage.
  EXPECT_NE(r.diagnostics.back().find("not found"), std::string::npos);

  auto l = parse_detection_output(R"([{"span":"off the hours!","category":"Cliche"}])", para);
  ASSERT_EQ(l.spans.size(), 1u);
  EXPECT_EQ(l.spans[0].resolution, Resolution::LongestCommonSubstring);
  EXPECT_EQ(utf8::substr(para, l.spans[0].resolved->first, l.spans[0].resolved->second), "off the hours");
}

TEST(DetectionParsing, OverlapsAreDropped) {
  const std::string para = "A very dark and stormy night.";
  auto r = parse_detection_output(
      R"([{"span":"dark and stormy","category":"Cliche"},{"span":"stormy night","category":"Cliche"}])", para);
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_NE(r.diagnostics[0].find("overlaps an earlier span"), std::string::npos);
}

TEST(RewriteParsing, QuotesAndPrefixes) {
  EXPECT_EQ(parse_rewrite_output("\"new words\""), "new words");
  EXPECT_EQ(parse_rewrite_output("Edited Span: \xE2\x80\x9Cnew words\xE2\x80\x9D"), "new words");
  EXPECT_EQ(parse_rewrite_output("\"\""), "");
  EXPECT_EQ(parse_rewrite_output("\"she said \"no\" twice\""), "she said \"no\" twice");
  EXPECT_THROW(parse_rewrite_output("no quotes"), MalformedOutput);
}

TEST(RewriteParsing, BoundaryCheck) {
  EXPECT_TRUE(check_boundary("The night,", "A day,").ok());
  EXPECT_FALSE(check_boundary("The night,", "a day,").leading_case);
  EXPECT_FALSE(check_boundary("The night,", "A day").trailing_punct);
  EXPECT_FALSE(check_boundary("\"Hi", "Hi").leading_punct);
  EXPECT_TRUE(check_boundary("The night,", "").ok());
}

// ---- pipeline ---------------------------------------------------------------------------

TEST(Pipeline, ExemplarBankIsSeededAndTrainOnly) {
  auto corpus = load_corpus((fixtures::data_dir() / "pipeline/corpus.jsonl").string());
  auto a = ExemplarBank::from_corpus(corpus, 13);
  auto b = ExemplarBank::from_corpus(corpus, 13);
  auto c = ExemplarBank::from_corpus(corpus, 14);
  std::set<std::string> train;
  for (const auto& p : corpus) {
    if (p.record.split == Split::Train) train.insert(p.record.response);
  }
  ASSERT_EQ(a.detection_pool(), train.size());
  std::vector<std::string> oa, oc;
  for (const auto& d : a.detection(a.detection_pool())) {
    EXPECT_TRUE(train.count(d.paragraph));
    oa.push_back(d.paragraph);
  }
  auto again = b.detection(b.detection_pool());
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(again[i].paragraph, oa[i]);
  for (const auto& d : c.detection(c.detection_pool())) oc.push_back(d.paragraph);
  EXPECT_NE(oa, oc);
  EXPECT_THROW(a.detection(25), PipelineError);
  for (auto k : kNamedCategories) EXPECT_FALSE(a.rewrite(k).empty()) << EditCategory(k).wire_name();
  auto capped = ExemplarBank::from_corpus(corpus, 13, 1);
  for (auto k : kNamedCategories) EXPECT_EQ(capped.rewrite(k).size(), 1u);
}

TEST(Pipeline, OracleModeRewritesGivenSpans) {
  auto model = std::make_shared<CannedProvider>("\"bright\"");
  Pipeline pipe(model, ExemplarBank{}, PipelineOptions{.model = "m"});
  OracleSpans spans;
  spans.ranges = {{17, 22}, {4, 8}};
  spans.categories = {EditCategory::Kind::Cliche, EditCategory::Kind::Cliche};
  auto out = pipe.edit_paragraph("x", "The dark night's storm, cold.", spans);
  EXPECT_EQ(out.final_text, "The bright night's bright, cold.");
  ASSERT_EQ(out.edits.size(), 2u);
  EXPECT_EQ(out.edits[0].start, 4u) << "spans are processed in text order";
  EXPECT_EQ(out.edits[0].order_index, 0);
  EXPECT_EQ(model->calls.load(), 2);
  EXPECT_EQ(model->last.temperature, 0.0);
  EXPECT_EQ(out.mode, EditMode::Oracle);
}

TEST(Pipeline, GenerationUsesGenerationTemperature) {
  auto model = std::make_shared<CannedProvider>("  Describe a storm.\n");
  Pipeline pipe(model, ExemplarBank{}, PipelineOptions{.model = "m"});
  EXPECT_EQ(pipe.backtranslate_instruction("It rained."), "Describe a storm.");
  EXPECT_DOUBLE_EQ(model->last.temperature, 0.7);
}

TEST(Pipeline, ReplayReproducesGoldenOutputs) {
  const auto dir = fixtures::data_dir() / "pipeline";
  auto corpus = load_corpus((dir / "corpus.jsonl").string());
  auto bank = ExemplarBank::from_corpus(corpus, 13);
  auto replay = std::make_shared<llm::ReplayProvider>(llm::ReplayProvider::from_file((dir / "fixture.jsonl").string()));
  for (std::size_t jobs : {1u, 4u}) {
    Pipeline pipe(replay, bank, PipelineOptions{.model = "gpt-4o", .jobs = jobs});
    std::string full, oracle;
    for (const auto& p : corpus) {
      if (p.record.split != Split::Test) continue;
      full += dump_line(to_json(pipe.edit_paragraph(p.record.id, p.record.response, FullDetection{5}))) + "\n";
      OracleSpans o;
      for (const auto& e : p.live_edits()) {
        o.ranges.emplace_back(e.start, e.end);
        o.categories.push_back(e.category);
      }
      oracle += dump_line(to_json(pipe.edit_paragraph(p.record.id, p.record.response, o))) + "\n";
    }
    EXPECT_EQ(full, fixtures::read_file(dir / "golden_full.jsonl")) << "jobs=" << jobs;
    EXPECT_EQ(oracle, fixtures::read_file(dir / "golden_oracle.jsonl")) << "jobs=" << jobs;
  }
  Pipeline pipe(replay, bank, PipelineOptions{.model = "gpt-4o"});
  EXPECT_THROW(pipe.edit_paragraph("x", corpus.back().record.response, FullDetection{2}), llm::FixtureMiss);
}
