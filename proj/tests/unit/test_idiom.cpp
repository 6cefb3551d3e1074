#include <gtest/gtest.h>

#include <sstream>

#include "lamp/idiom.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace lamp;
using idiom::Template;

namespace {

std::vector<std::vector<std::string>> tag_docs(const std::vector<idiom::TaggedParagraph>& corpus) {
  std::vector<std::vector<std::string>> out;
  for (const auto& p : corpus) {
    std::vector<std::string> tags;
    for (const auto& t : p.tokens) tags.push_back(t.tag);
    out.push_back(std::move(tags));
  }
  return out;
}

}  // namespace

TEST(Idiom, CountsMatchBruteForce) {
  auto corpus = fixtures::synthetic_tagged(40, 9, false);
  auto table = idiom::extract_templates(corpus, {3, 5});
  for (std::size_t n : {3u, 5u}) {
    auto ref = oracle::count_tag_ngrams(tag_docs(corpus), n);
    for (const auto& [g, c] : ref) {
      auto it = table.templates.find(g);
      ASSERT_NE(it, table.templates.end());
      EXPECT_EQ(it->second.count, c.count);
      EXPECT_EQ(it->second.documents, c.documents);
    }
  }
  std::size_t expected = oracle::count_tag_ngrams(tag_docs(corpus), 3).size() +
                         oracle::count_tag_ngrams(tag_docs(corpus), 5).size();
  EXPECT_EQ(table.templates.size(), expected);
}

TEST(Idiom, PlantedTemplateIsFlagged) {
  auto llm = fixtures::synthetic_tagged(60, 21, true);
  auto human = fixtures::synthetic_tagged(60, 22, false);
  auto lt = idiom::extract_templates(llm, {5});
  auto ht = idiom::extract_templates(human, {5});
  auto reps = idiom::contrast_templates(lt, ht, 50, 0.5);
  const Template planted = {"DT", "NN", "IN", "NN", "CC"};
  auto it = std::find_if(reps.begin(), reps.end(), [&](const auto& r) { return r.pattern == planted; });
  ASSERT_NE(it, reps.end());
  EXPECT_EQ(it->llm_count, 20u);
  bool seen = false;
  for (const auto& seq : it->representative_sequences) seen |= idiom::surface(seq) == "a mix of pride and";
  EXPECT_TRUE(seen);

  // Flag set equals the brute-force oracle's.
  auto want = oracle::flagged_templates(tag_docs(llm), tag_docs(human), 5, 50, 0.5);
  std::set<Template> got;
  for (const auto& r : reps) got.insert(r.pattern);
  EXPECT_EQ(got, std::set<Template>(want.begin(), want.end()));
}

TEST(Idiom, RarityRuleBoundary) {
  // Template present in every LLM paragraph and half of the human ones: the
  // human fraction equals 0.5 x the LLM fraction, which is not "below".
  std::vector<idiom::TaggedParagraph> llm(2), human(2);
  for (auto* c : {&llm, &human}) {
    for (auto& p : *c) p.tokens = {{"x", "A"}, {"y", "B"}};
  }
  human[1].tokens = {{"x", "C"}, {"y", "D"}};
  auto lt = idiom::extract_templates(llm, {2});
  auto ht = idiom::extract_templates(human, {2});
  EXPECT_TRUE(idiom::contrast_templates(lt, ht, 10, 0.5).empty());
  EXPECT_EQ(idiom::contrast_templates(lt, ht, 10, 0.51).size(), 1u);
  EXPECT_THROW(idiom::contrast_templates(lt, idiom::extract_templates(human, {3}), 10, 0.5), idiom::IdiomError);
  EXPECT_THROW(idiom::contrast_templates(lt, ht, 0, 0.5), idiom::IdiomError);
}

TEST(Idiom, ParsesTaggedTsv) {
  std::istringstream in("# id: first\r\nThe\tDT\r\ncat\tNN\r\n\r\nA\tDT\n\n\n");
  auto c = idiom::parse_tagged(in);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].source_id, "first");
  EXPECT_EQ(c[0].tokens[1], (idiom::Token{"cat", "NN"}));
  EXPECT_EQ(c[1].source_id, "p2");
  std::istringstream bad("The DT\n");
  try {
    idiom::parse_tagged(bad);
    FAIL();
  } catch (const idiom::IdiomError& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
}

TEST(Idiom, TsvRoundTripOfSyntheticCorpus) {
  auto corpus = fixtures::synthetic_tagged(5, 1, true);
  std::istringstream in(fixtures::to_tsv(corpus));
  auto back = idiom::parse_tagged(in);
  ASSERT_EQ(back.size(), corpus.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].source_id, corpus[i].source_id);
    EXPECT_EQ(back[i].tokens, corpus[i].tokens);
  }
}

TEST(Idiom, LexicalContrastWholeWordsAndPhrases) {
  std::vector<std::string> llm = {"A tapestry of light, a testament to love.", "Her tapestry of memories.",
                                  "The Tapestry hung there.", "Nothing here."};
  std::vector<std::string> human = {"A rug of light.", "Tapestrys are not words.", "Memories fade."};
  auto hits = idiom::contrast_lexical(llm, human, 0.5, 0.0, {"tapestry of"});
  std::map<std::string, idiom::LexicalHit> by;
  for (const auto& h : hits) by[h.term] = h;
  ASSERT_TRUE(by.count("tapestry"));
  EXPECT_DOUBLE_EQ(by["tapestry"].llm_doc_fraction, 0.75);
  EXPECT_DOUBLE_EQ(by["tapestry"].human_doc_fraction, 0.0) << "\"Tapestrys\" is a different word";
  ASSERT_TRUE(by.count("tapestry of"));
  EXPECT_DOUBLE_EQ(by["tapestry of"].llm_doc_fraction, 0.5);
  EXPECT_FALSE(by.count("of")) << "\"of\" appears in human text";
  EXPECT_EQ(hits.front().term, "tapestry");
  EXPECT_THROW(idiom::contrast_lexical({}, human, 0.5, 0.0), idiom::IdiomError);
  EXPECT_THROW(idiom::contrast_lexical(llm, human, 1.5, 0.0), idiom::IdiomError);
}

TEST(Idiom, WordsTokenizer) {
  EXPECT_EQ(idiom::words("Don\xE2\x80\x99t stop, caf\xC3\xA9-NOIR!"),
            (std::vector<std::string>{"don't", "stop", "caf\xC3\xA9", "noir"}));
}

TEST(Idiom, TemplateEditRateJoinsOnSourceId) {
  AnnotatedParagraph rec;
  rec.record.id = "p";
  rec.record.response = "a mix of pride and joy, a mix of fear and hope";
  EditSpan e;
  e.start = 0;
  e.end = 5;  // "a mix"
  e.original = "a mix";
  e.replacement = "some";
  rec.edits.push_back(e);
  idiom::TaggedParagraph tp;
  tp.source_id = "p";
  tp.tokens = {{"a", "DT"}, {"mix", "NN"}, {"of", "IN"}, {"pride", "NN"}, {"and", "CC"}, {"joy", "NN"},
               {",", ","},  {"a", "DT"},   {"mix", "NN"}, {"of", "IN"},   {"fear", "NN"}, {"and", "CC"},
               {"hope", "NN"}};
  auto rate = idiom::template_edit_rate({"DT", "NN", "IN", "NN", "CC"}, {tp}, {rec});
  ASSERT_TRUE(rate.has_value());
  EXPECT_DOUBLE_EQ(*rate, 0.5);
  tp.source_id = "missing";
  EXPECT_FALSE(idiom::template_edit_rate({"DT", "NN", "IN", "NN", "CC"}, {tp}, {rec}).has_value());
}

TEST(Idiom, ShippedPhraseListLoads) {
  auto phrases = idiom::load_phrases((fixtures::data_dir() / ".." / ".." / "assets" / "phrases.txt").string());
  ASSERT_GE(phrases.size(), 5u);
  EXPECT_EQ(phrases.front(), "weight of");
  auto hits = idiom::contrast_lexical({"The weight of it.", "A mix of things."}, {"Nothing alike."}, 0.5, 0.0, phrases);
  EXPECT_TRUE(std::any_of(hits.begin(), hits.end(), [](const auto& h) { return h.term == "weight of"; }));
}
