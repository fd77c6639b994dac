#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lesion/ontology.hpp"

namespace lesion {

// Mann-Whitney AUC with midranks: (correctly ordered pos/neg pairs + 0.5 ties)
// / (P * N). Throws std::domain_error unless both classes are present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct RocPoint {
  double fpr = 0, tpr = 0;
};

// Staircase from (0, 0) to (1, 1) with one vertex per distinct score; tied
// scores produce a diagonal step.
std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const std::uint8_t> labels);
double trapezoid_area(std::span<const RocPoint> pts);

struct LabelAuc {
  LabelId label_id = 0;  // ontology id
  std::string name;
  Category category = Category::body_part;
  double auc = 0.5;
  std::size_t n_pos = 0, n_neg = 0;
};

struct MeanStd {
  double mean = 0, std = 0;  // population std over labels
  std::size_t count = 0;
};

struct CategoryReport {
  MeanStd overall;
  std::optional<MeanStd> body_part, finding_type, attribute;  // absent when no label evaluated
  std::vector<LabelAuc> per_label;
  std::vector<LabelAuc> skipped;  // single-class labels, auc undefined

  const std::optional<MeanStd>& category(Category c) const;
};

// Per-label AUC over a (samples x labels) score/label layout. `label_ids`
// maps columns to ontology ids. Single-class columns land in `skipped`.
CategoryReport evaluate(std::span<const std::vector<double>> scores, std::span<const std::vector<std::uint8_t>> labels,
                        std::span<const LabelId> label_ids, const Ontology& o, unsigned threads = 1);

// Unweighted mean/std of per-label AUCs, overall and per category.
CategoryReport category_report(std::vector<LabelAuc> per_label);

struct TopkSets {
  std::vector<std::size_t> tp, fp, fn;
};

// Indices of the k largest scores, ties broken towards the lower index.
std::vector<std::size_t> predict_topk(std::span<const double> scores, std::size_t k);
TopkSets topk_report(std::span<const double> scores, std::span<const std::size_t> truth, std::size_t k);

void write_label_csv(std::ostream& out, const CategoryReport& r);
void write_summary_csv(std::ostream& out, const CategoryReport& r, const std::string& method);
void write_roc_csv(std::ostream& out, std::span<const RocPoint> pts);

}  // namespace lesion
