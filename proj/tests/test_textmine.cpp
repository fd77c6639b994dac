#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "lesion/io.hpp"
#include "lesion/ontology.hpp"
#include "lesion/textmine.hpp"

using namespace lesion;

namespace {

std::vector<std::string> surfaces(const std::vector<Token>& ts) {
  std::vector<std::string> out;
  for (const auto& t : ts) out.push_back(t.surface);
  return out;
}

std::vector<std::string> names(const Ontology& o, const LabelSet& ids) {
  std::vector<std::string> out;
  for (LabelId id : ids) out.push_back(o.label(id).name);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> sorted(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  return v;
}

Ontology demo() { return load_ontology(LESION_TEST_DATA "/demo_lexicon.tsv"); }

std::vector<Token> lemmas(std::initializer_list<const char*> words) {
  std::vector<Token> out;
  for (const char* w : words) {
    Token t;
    t.surface = w;
    t.lemma = w;
    out.push_back(t);
  }
  return out;
}

Ontology build(std::vector<Ontology::Entry> e) { return Ontology::build(std::move(e)); }

}  // namespace

TEST(Tokenize, EmptyText) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, BookmarkedSentence) {
  const std::string text = "Spiculated nodule, right lower lobe (BOOKMARK).";
  auto ts = tokenize(text);
  ASSERT_EQ(ts.size(), 6u);
  const std::vector<CharSpan> spans = {{0, 10}, {11, 17}, {19, 24}, {25, 30}, {31, 35}, {37, 45}};
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_EQ(ts[i].span, spans[i]) << i;
    EXPECT_EQ(text.substr(ts[i].span.begin, ts[i].span.end - ts[i].span.begin), ts[i].surface);
  }
  lemmatize_all(ts);
  std::vector<std::string> ls;
  for (const auto& t : ts) ls.push_back(t.lemma);
  EXPECT_EQ(ls, (std::vector<std::string>{"spiculated", "nodule", "right", "lower", "lobe", "bookmark"}));
  EXPECT_TRUE(ts.back().marker);
  EXPECT_FALSE(ts.front().marker);
}

TEST(Tokenize, NumbersAndHyphens) {
  EXPECT_EQ(surfaces(tokenize("2.1-cm mass")), (std::vector<std::string>{"2.1", "cm", "mass"}));
  EXPECT_EQ(surfaces(tokenize("1,200 HU; end.")), (std::vector<std::string>{"1,200", "HU", "end"}));
  EXPECT_EQ(surfaces(tokenize("ground-glass")), (std::vector<std::string>{"ground", "glass"}));
  EXPECT_EQ(surfaces(tokenize("lobe.2")), (std::vector<std::string>{"lobe", "2"}));
  EXPECT_TRUE(tokenize(" .,;()- ").empty());
}

TEST(Lemmatize, SuffixRulesAndExceptions) {
  EXPECT_EQ(lemmatize("nodules"), "nodule");
  EXPECT_EQ(lemmatize("masses"), "mass");
  EXPECT_EQ(lemmatize("liver"), "liver");
  EXPECT_EQ(lemmatize("Metastases"), "metastasis");
  EXPECT_EQ(lemmatize("calcifications"), "calcification");
  EXPECT_EQ(lemmatize("opacities"), "opacity");
  EXPECT_EQ(lemmatize("boxes"), "box");
  EXPECT_EQ(lemmatize("branches"), "branch");
  EXPECT_EQ(lemmatize("lungs"), "lung");
  EXPECT_EQ(lemmatize("mass"), "mass");
  EXPECT_EQ(lemmatize("uterus"), "uterus");
  EXPECT_EQ(lemmatize("pelvis"), "pelvis");
  EXPECT_EQ(lemmatize("gas"), "gas");
  EXPECT_EQ(lemmatize("2.1"), "2.1");
}

TEST(Lemmatize, Idempotent) {
  std::mt19937_64 rng(4);
  const std::string letters = "abcehilnorsuxyz";
  std::vector<std::string> words = {"masses", "vertebraes", "hilas", "series", "classes", "diseases", "buses", "ies"};
  for (int i = 0; i < 5000; ++i) {
    std::string w;
    const std::size_t n = 1 + rng() % 9;
    for (std::size_t k = 0; k < n; ++k) w.push_back(letters[rng() % letters.size()]);
    if (rng() % 2) w += std::vector<std::string>{"s", "es", "ies", "ses", "xes"}[rng() % 5];
    words.push_back(w);
  }
  for (const auto& w : words) {
    const auto once = lemmatize(w);
    EXPECT_EQ(lemmatize(once), once) << w;
    EXPECT_FALSE(once.empty()) << w;
  }
}

TEST(Match, LongestMatchMergesSynonyms) {
  const Ontology o = build({{"liver", Category::body_part, {"hepatic"}, {}},
                            {"mass", Category::finding_type, {}, {}},
                            {"liver mass", Category::finding_type, {"hepatic mass"}, {"liver", "mass"}}});
  const auto r = match_labels(lemmas({"hepatic", "mass"}), o);
  EXPECT_EQ(r.label_ids, LabelSet{2});
  ASSERT_EQ(r.matches.size(), 1u);
  EXPECT_EQ(r.matches[0], (TermMatch{2, 0, 2}));
  EXPECT_TRUE(match_labels(lemmas({"no", "finding"}), o).label_ids.empty());
}

TEST(Match, LaterStandaloneTermStillMatches) {
  const Ontology o = build({{"lung", Category::body_part, {}, {}},
                            {"nodule", Category::finding_type, {}, {}},
                            {"lung nodule", Category::finding_type, {}, {"lung", "nodule"}}});
  const auto r = match_labels(lemmas({"lung", "nodule", "and", "nodule"}), o);
  EXPECT_EQ(r.label_ids, (LabelSet{1, 2}));
  ASSERT_EQ(r.matches.size(), 2u);
  EXPECT_EQ(r.matches[0], (TermMatch{2, 0, 2}));
  EXPECT_EQ(r.matches[1], (TermMatch{1, 3, 4}));
}

TEST(Match, BookmarkBreaksAMatch) {
  const Ontology o = demo();
  EXPECT_EQ(names(o, mine_labels(Sentence::from_text("lung BOOKMARK nodule"), o)),
            sorted({"chest", "lung", "nodule"}));
}

TEST(Mine, DemoSentences) {
  const Ontology o = demo();
  EXPECT_EQ(names(o, mine_labels(Sentence::from_text("Left upper lobe lung nodule (BOOKMARK)"), o)),
            sorted({"lung nodule", "lung", "nodule", "chest"}));
  EXPECT_EQ(names(o, mine_labels(Sentence::from_text("Hypodense hepatic lesion (BOOKMARK)."), o)),
            std::vector<std::string>{"liver"});
  EXPECT_EQ(mine_sentence(Sentence::from_text(""), o), LabelVector(o.size(), 0));
  EXPECT_EQ(mine_sentence(Sentence::from_text("Lung nodule"), o).size(), o.size());
}

TEST(Mine, CaseInsensitiveAndMonotone) {
  const Ontology o = load_ontology(LESION_TEST_DATA "/golden_lexicon.tsv");
  const auto records = read_records(std::filesystem::path(LESION_TEST_DATA "/golden_corpus.jsonl"));
  for (const auto& r : records) {
    std::string upper = r.sentence.text;
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const auto base = mine_labels(r.sentence, o);
    EXPECT_EQ(mine_labels(Sentence::from_text(upper), o), base) << r.sentence.text;

    // Ancestor-closed.
    for (LabelId id : base) {
      for (LabelId a : o.ancestors(id)) EXPECT_TRUE(base.count(a));
    }

    // Inserting an unrelated word at a token boundary keeps every label,
    // unless it lands inside a multi-word match.
    auto tokens = tokenize(r.sentence.text);
    lemmatize_all(tokens);
    const auto matches = match_labels(tokens, o).matches;
    for (std::size_t pos = 0; pos <= tokens.size(); ++pos) {
      bool splits = false;
      for (const auto& m : matches) splits |= pos > m.first_token && pos < m.last_token;
      if (splits) continue;
      const std::size_t at = pos < tokens.size() ? tokens[pos].span.begin : r.sentence.text.size();
      std::string text = r.sentence.text;
      text.insert(at, pos < tokens.size() ? "quite " : " quite");
      const auto more = mine_labels(Sentence::from_text(text), o);
      EXPECT_TRUE(std::includes(more.begin(), more.end(), base.begin(), base.end())) << text;
    }
  }
}

TEST(Mine, GoldenCorpus) {
  const Ontology o = load_ontology(LESION_TEST_DATA "/golden_lexicon.tsv");
  const auto records = read_records(std::filesystem::path(LESION_TEST_DATA "/golden_corpus.jsonl"));
  ASSERT_GE(records.size(), 20u);
  // Hand-derived expected sets, in corpus order.
  const std::vector<std::vector<std::string>> expected = {
      {"lung nodule", "lung", "nodule", "chest"},
      {"hypoattenuation", "liver", "abdomen"},
      {"large", "mediastinum lymph node", "mediastinum", "lymph node", "chest"},
      {"spiculated", "mass", "right upper lobe", "lung", "chest"},
      {"lung nodule", "lung", "nodule", "chest", "right upper lobe"},
      {"liver mass", "liver", "mass", "abdomen"},
      {"kidney cyst", "kidney", "cyst", "abdomen"},
      {"calcified"},
      {},
      {"ground-glass opacity", "lung", "chest"},
      {"ground-glass opacity", "lung", "chest", "right upper lobe"},
      {"hypoattenuation", "liver", "abdomen"},
      {"lung", "chest", "nodule"},
      {"chest", "lymph node"},
      {"mass", "liver", "kidney", "abdomen"},
      {"nodule"},
      {"mediastinum", "chest", "mass"},
      {"lung", "chest", "mass"},
      {},
      {"spiculated", "calcified", "lung nodule", "lung", "nodule", "chest"},
      {"kidney", "abdomen", "mass"},
      {"liver", "abdomen", "cyst"},
      {"lung", "chest", "nodule"},
      {"right upper lobe", "lung", "chest", "lung nodule", "nodule"},
  };
  ASSERT_EQ(records.size(), expected.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    EXPECT_EQ(names(o, mine_labels(records[i].sentence, o)), sorted(expected[i])) << records[i].sentence.text;
  }

  // The JSONL writer reproduces the golden file byte for byte.
  const Corpus c = build_corpus(records, o);
  std::ostringstream out;
  write_mined(out, c, o);
  std::ifstream golden(LESION_TEST_DATA "/golden_mined.jsonl");
  const std::string want((std::istreambuf_iterator<char>(golden)), std::istreambuf_iterator<char>());
  EXPECT_EQ(out.str(), want);
}
