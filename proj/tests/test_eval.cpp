#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "lesion/eval.hpp"
#include "lesion/ontology.hpp"

using namespace lesion;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double num = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      pairs += 1;
    }
  }
  return num / pairs;
}

LabelAuc row(LabelId id, Category c, double a) {
  LabelAuc l;
  l.label_id = id;
  l.name = "l" + std::to_string(id);
  l.category = c;
  l.auc = a;
  l.n_pos = 3;
  l.n_neg = 4;
  return l;
}

Ontology small_ontology() {
  std::vector<Ontology::Entry> e{
      {"chest", Category::body_part, {}, {}},
      {"lung", Category::body_part, {}, {"chest"}},
      {"nodule", Category::finding_type, {}, {}},
      {"small", Category::attribute, {}, {}},
  };
  return Ontology::build(e);
}

}  // namespace

TEST(Auc, SimpleCases) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auc(s, y), 0.75);
  const std::vector<double> flat(4, 0.3);
  EXPECT_DOUBLE_EQ(auc(flat, y), 0.5);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{0, 1}, std::vector<std::uint8_t>{0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auc(std::vector<double>{1, 0}, std::vector<std::uint8_t>{0, 1}), 0.0);
}

TEST(Auc, SingleClassThrows) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}), std::domain_error);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{0, 0}), std::domain_error);
  EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<std::uint8_t>{0, 1}), std::invalid_argument);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 200;
    const int levels = 1 + static_cast<int>(rng() % 12);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / levels;
      y[i] = rng() % 3 == 0;
    }
    y[0] = 1;
    y[1] = 0;
    const double a = auc(s, y);
    EXPECT_NEAR(a, pairwise_auc(s, y), 1e-12);
    const auto pts = roc_points(s, y);
    EXPECT_NEAR(trapezoid_area(pts), a, 1e-12);
  }
}

TEST(Roc, Shape) {
  const std::vector<double> s{0.9, 0.5, 0.5, 0.1};
  const std::vector<std::uint8_t> y{1, 1, 0, 0};
  const auto pts = roc_points(s, y);
  ASSERT_EQ(pts.size(), 4u);  // origin + one vertex per distinct score
  EXPECT_EQ(pts.front().fpr, 0.0);
  EXPECT_EQ(pts.front().tpr, 0.0);
  EXPECT_EQ(pts[1].tpr, 0.5);
  EXPECT_EQ(pts[1].fpr, 0.0);
  EXPECT_EQ(pts[2].tpr, 1.0);
  EXPECT_EQ(pts[2].fpr, 0.5);
  EXPECT_EQ(pts.back().fpr, 1.0);
  EXPECT_EQ(pts.back().tpr, 1.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_GE(pts[i].fpr, pts[i - 1].fpr);
    EXPECT_GE(pts[i].tpr, pts[i - 1].tpr);
  }
  EXPECT_DOUBLE_EQ(trapezoid_area(pts), 0.875);
}

TEST(CategoryReport, MeansAndAbsentCategories) {
  const auto r = category_report({row(0, Category::body_part, 0.8), row(1, Category::body_part, 1.0)});
  ASSERT_TRUE(r.body_part);
  EXPECT_DOUBLE_EQ(r.body_part->mean, 0.9);
  EXPECT_NEAR(r.body_part->std, 0.1, 1e-12);
  EXPECT_EQ(r.body_part->count, 2u);
  EXPECT_FALSE(r.finding_type);
  EXPECT_FALSE(r.attribute);
  EXPECT_DOUBLE_EQ(r.overall.mean, 0.9);
  EXPECT_FALSE(r.category(Category::attribute));
}

TEST(CategoryReport, OverallIsUnweightedOverLabels) {
  const auto r = category_report({row(0, Category::body_part, 0.6), row(1, Category::finding_type, 0.7),
                                  row(2, Category::finding_type, 0.8), row(3, Category::attribute, 0.9)});
  EXPECT_DOUBLE_EQ(r.overall.mean, 0.75);
  EXPECT_EQ(r.overall.count, 4u);
  EXPECT_NEAR(r.overall.std, std::sqrt(0.0125), 1e-12);
  EXPECT_DOUBLE_EQ(r.finding_type->mean, 0.75);
  EXPECT_DOUBLE_EQ(r.attribute->std, 0.0);
}

TEST(Evaluate, SkipsSingleClassColumns) {
  const Ontology o = small_ontology();
  const std::vector<std::vector<double>> s{{0.9, 0.1, 0.4}, {0.2, 0.3, 0.6}, {0.7, 0.2, 0.5}, {0.1, 0.8, 0.3}};
  const std::vector<std::vector<std::uint8_t>> y{{1, 0, 1}, {0, 0, 1}, {1, 0, 1}, {0, 0, 1}};
  const std::vector<LabelId> ids{1, 2, 3};
  const auto r = evaluate(s, y, ids, o);
  ASSERT_EQ(r.per_label.size(), 1u);
  EXPECT_EQ(r.per_label[0].label_id, 1u);
  EXPECT_EQ(r.per_label[0].name, "lung");
  EXPECT_DOUBLE_EQ(r.per_label[0].auc, 1.0);
  EXPECT_EQ(r.skipped.size(), 2u);
  EXPECT_FALSE(r.finding_type);

  std::ostringstream lab, sum;
  write_label_csv(lab, r);
  write_summary_csv(sum, r, "weighted");
  EXPECT_EQ(lab.str(),
            "label_id,label_name,category,n_pos,n_neg,auc\n"
            "1,lung,body_part,2,2,1.000000\n"
            "2,nodule,finding_type,0,4,NA\n"
            "3,small,attribute,4,0,NA\n");
  EXPECT_EQ(sum.str(),
            "method,overall,overall_std_over_labels,body_part,type,attribute,n_evaluated,n_skipped\n"
            "weighted,1.000000,0.000000,1.000000,NA,NA,1,2\n");
}

TEST(Evaluate, ThreadCountInvariant) {
  const Ontology o = small_ontology();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> s(50, std::vector<double>(4));
  std::vector<std::vector<std::uint8_t>> y(50, std::vector<std::uint8_t>(4));
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      s[i][k] = u(rng);
      y[i][k] = (i + k) % 3 == 0;
    }
  const std::vector<LabelId> ids{0, 1, 2, 3};
  std::ostringstream a, b;
  write_label_csv(a, evaluate(s, y, ids, o, 1));
  write_label_csv(b, evaluate(s, y, ids, o, 3));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Topk, OrderAndTies) {
  EXPECT_EQ(predict_topk(std::vector<double>{0.1, 0.9, 0.5}, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(predict_topk(std::vector<double>{0.5, 0.5, 0.5}, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(predict_topk(std::vector<double>{0.3, 0.2, 0.7}, 3), (std::vector<std::size_t>{2, 0, 1}));
  EXPECT_THROW(predict_topk(std::vector<double>{0.3, 0.2}, 5), std::invalid_argument);
}

TEST(Topk, Report) {
  const std::vector<double> s{0.1, 0.9, 0.5, 0.7};
  const std::vector<std::size_t> truth{0, 1};
  const auto r = topk_report(s, truth, 2);
  EXPECT_EQ(r.tp, (std::vector<std::size_t>{1}));
  EXPECT_EQ(r.fp, (std::vector<std::size_t>{3}));
  EXPECT_EQ(r.fn, (std::vector<std::size_t>{0}));
}

TEST(Roc, CsvFormat) {
  const std::vector<RocPoint> pts{{0, 0}, {0.25, 0.5}, {1, 1}};
  std::ostringstream out;
  write_roc_csv(out, pts);
  EXPECT_EQ(out.str(), "fpr,tpr\n0.000000,0.000000\n0.250000,0.500000\n1.000000,1.000000\n");
}
