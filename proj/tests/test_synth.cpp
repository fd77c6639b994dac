#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "lesion/dataset.hpp"
#include "lesion/io.hpp"
#include "lesion/synth.hpp"
#include "lesion/textmine.hpp"

using namespace lesion;

namespace {

SynthConfig small(std::uint64_t seed, double missing, double spurious, std::size_t n_train = 300) {
  SynthConfig c;
  c.n_labels = 40;
  c.n_train = n_train;
  c.n_test = 60;
  c.missing_rate = missing;
  c.spurious_rate = spurious;
  c.seed = seed;
  return c;
}

LabelSet truth_set(const LesionRecord& r, const Ontology& o) {
  LabelSet s;
  for (const auto& n : *r.truth_labels) s.insert(*o.find(n));
  return s;
}

LabelSet leaves(const LabelSet& truth, const Ontology& o) {
  LabelSet out;
  for (LabelId id : truth) {
    bool has_child = false;
    for (LabelId other : truth) {
      const auto& ps = o.label(other).parents;
      has_child |= std::find(ps.begin(), ps.end(), id) != ps.end();
    }
    if (!has_child) out.insert(id);
  }
  return out;
}

std::string serialise(const SynthCorpus& s) {
  std::ostringstream out;
  write_ontology(out, s.ontology);
  write_records(out, s.train);
  write_records(out, s.test);
  for (std::size_t i = 0; i < s.train_patches.size(); ++i) write_f32(out, s.train_patches.patch(i));
  for (std::size_t i = 0; i < s.test_patches.size(); ++i) write_f32(out, s.test_patches.patch(i));
  return out.str();
}

}  // namespace

TEST(Synth, OntologyShape) {
  const Ontology o = synth_ontology(40);
  EXPECT_EQ(o.size(), 40u);
  std::set<Category> cats;
  for (const auto& l : o.labels()) cats.insert(l.category);
  EXPECT_EQ(cats.size(), 3u);
  EXPECT_GE(o.depth(), 2u);
  EXPECT_EQ(synth_ontology(synth_vocabulary_size()).size(), synth_vocabulary_size());
  // Smaller vocabularies keep every parent they reference.
  for (std::size_t n : {8, 13, 27}) EXPECT_EQ(synth_ontology(n).size(), n);
}

TEST(Synth, RecordsAreValidAndPatientDisjoint) {
  const SynthCorpus s = synth_generate(small(7, 0.3, 0.05));
  ASSERT_EQ(s.train.size(), 300u);
  ASSERT_EQ(s.test.size(), 60u);
  ASSERT_EQ(s.train_patches.size(), 300u);
  ASSERT_EQ(s.test_patches.size(), 60u);
  std::set<std::string> train_patients, ids;
  for (const auto& r : s.train) {
    validate(r);
    train_patients.insert(r.patient_id);
    ids.insert(r.lesion_id);
  }
  for (const auto& r : s.test) {
    validate(r);
    EXPECT_FALSE(train_patients.count(r.patient_id));
    ids.insert(r.lesion_id);
    EXPECT_NE(r.sentence.text.find("BOOKMARK"), std::string::npos);
  }
  EXPECT_EQ(ids.size(), 360u);
  for (std::size_t i = 0; i < s.train_patches.size(); ++i) {
    for (float v : s.train_patches.patch(i)) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
  for (const auto& r : s.train) {
    EXPECT_GE(r.bbox_mm.x0, 0.0);
    EXPECT_LE(r.bbox_mm.x1, 120.0);
    EXPECT_TRUE(r.bbox_mm.valid());
    // Truth sets are ancestor-closed.
    const auto t = truth_set(r, s.ontology);
    EXPECT_EQ(s.ontology.expand(t), t);
  }
}

TEST(Synth, Deterministic) {
  const auto cfg = small(7, 0.3, 0.05, 120);
  EXPECT_EQ(serialise(synth_generate(cfg)), serialise(synth_generate(cfg)));
  auto other = cfg;
  other.seed = 8;
  EXPECT_NE(serialise(synth_generate(cfg)), serialise(synth_generate(other)));
}

TEST(Synth, NoiseFreeMiningRecoversTruth) {
  const SynthCorpus s = synth_generate(small(3, 0.0, 0.0, 1000));
  EXPECT_EQ(s.stats.dropped, 0u);
  for (const auto* side : {&s.train, &s.test}) {
    for (const auto& r : *side) {
      const auto truth = truth_set(r, s.ontology);
      EXPECT_EQ(mine_labels(r.sentence, s.ontology), s.ontology.expand(leaves(truth, s.ontology))) << r.sentence.text;
      EXPECT_EQ(mine_labels(r.sentence, s.ontology), truth) << r.sentence.text;
    }
  }
}

TEST(Synth, FullMissingRateMentionsNoLeaf) {
  const SynthCorpus s = synth_generate(small(5, 1.0, 0.0, 500));
  EXPECT_EQ(s.stats.dropped, s.stats.leaves);
  for (const auto& r : s.train) {
    const auto mined = mine_labels(r.sentence, s.ontology);
    for (LabelId leaf : leaves(truth_set(r, s.ontology), s.ontology)) EXPECT_FALSE(mined.count(leaf)) << r.sentence.text;
  }
}

TEST(Synth, DroppedFractionTracksMissingRate) {
  for (double m : {0.1, 0.3, 0.5}) {
    SynthConfig c = small(11, m, 0.05, 5000);
    c.n_test = 10;
    const SynthCorpus s = synth_generate(c);
    EXPECT_NEAR(s.stats.dropped_fraction(), m, 0.02) << m;
    // Half of the dropped mentions fall back to a parent term when one exists.
    EXPECT_GT(s.stats.replaced, 0u);
    EXPECT_LT(s.stats.replaced, s.stats.dropped);
  }
}

TEST(Synth, SpuriousMentionsAddOutsideLabels) {
  const SynthCorpus s = synth_generate(small(13, 0.0, 1.0, 400));
  std::size_t extra = 0;
  for (const auto& r : s.train) {
    const auto mined = mine_labels(r.sentence, s.ontology);
    const auto truth = truth_set(r, s.ontology);
    EXPECT_TRUE(std::includes(mined.begin(), mined.end(), truth.begin(), truth.end()));
    extra += mined.size() > truth.size();
  }
  EXPECT_EQ(extra, s.train.size());
  EXPECT_EQ(s.stats.spurious, 460u);
}
