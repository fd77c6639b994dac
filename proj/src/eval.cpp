#include "lesion/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "lesion/parallel.hpp"

namespace lesion {

namespace {

void check_inputs(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  const auto n_pos = std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; });
  if (n_pos == 0 || n_pos == static_cast<long>(labels.size())) {
    throw std::domain_error("auc undefined: need at least one positive and one negative");
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the midrank of a tie group [i, j) (1-based ranks i+1..j) is i + j + 1.
  std::uint64_t rank2_pos = 0, n_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank2_pos += i + j + 1;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::uint64_t n_neg = n - n_pos;
  const std::uint64_t u2 = rank2_pos - n_pos * (n_pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_points(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto n_pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](auto v) { return v != 0; }));
  const double n_neg = static_cast<double>(n) - n_pos;

  std::vector<RocPoint> pts{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tp : fp)++;
      ++j;
    }
    pts.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
    i = j;
  }
  return pts;
}

double trapezoid_area(std::span<const RocPoint> pts) {
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].fpr - pts[i - 1].fpr) * 0.5 * (pts[i].tpr + pts[i - 1].tpr);
  }
  return area;
}

const std::optional<MeanStd>& CategoryReport::category(Category c) const {
  switch (c) {
    case Category::body_part:
      return body_part;
    case Category::finding_type:
      return finding_type;
    case Category::attribute:
      break;
  }
  return attribute;
}

namespace {

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  m.count = v.size();
  if (v.empty()) return m;
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(sq / static_cast<double>(v.size()));
  return m;
}

}  // namespace

CategoryReport category_report(std::vector<LabelAuc> per_label) {
  if (per_label.empty()) throw std::invalid_argument("category_report: no evaluated labels");
  CategoryReport r;
  std::vector<double> all, by_cat[3];
  for (const auto& l : per_label) {
    all.push_back(l.auc);
    by_cat[static_cast<int>(l.category)].push_back(l.auc);
  }
  r.overall = mean_std(all);
  std::optional<MeanStd>* slots[3] = {&r.body_part, &r.finding_type, &r.attribute};
  for (int c = 0; c < 3; ++c) {
    if (!by_cat[c].empty()) *slots[c] = mean_std(by_cat[c]);
  }
  r.per_label = std::move(per_label);
  return r;
}

CategoryReport evaluate(std::span<const std::vector<double>> scores, std::span<const std::vector<std::uint8_t>> labels,
                        std::span<const LabelId> label_ids, const Ontology& o, unsigned threads) {
  if (scores.size() != labels.size()) throw std::invalid_argument("evaluate: score/label row counts differ");
  const std::size_t k = label_ids.size();
  std::vector<LabelAuc> results(k);
  std::vector<std::uint8_t> defined(k, 0);
  parallel_for(k, threads, [&](std::size_t c) {
    std::vector<double> col(scores.size());
    std::vector<std::uint8_t> lab(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      col[i] = scores[i].at(c);
      lab[i] = labels[i].at(c);
    }
    LabelAuc& r = results[c];
    const auto& def = o.label(label_ids[c]);
    r.label_id = def.id;
    r.name = def.name;
    r.category = def.category;
    r.n_pos = static_cast<std::size_t>(std::count(lab.begin(), lab.end(), 1));
    r.n_neg = lab.size() - r.n_pos;
    if (r.n_pos > 0 && r.n_neg > 0) {
      r.auc = auc(col, lab);
      defined[c] = 1;
    }
  });
  std::vector<LabelAuc> ok, skipped;
  for (std::size_t c = 0; c < k; ++c) (defined[c] ? ok : skipped).push_back(results[c]);
  CategoryReport r = category_report(std::move(ok));
  r.skipped = std::move(skipped);
  return r;
}

std::vector<std::size_t> predict_topk(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) throw std::invalid_argument("predict_topk: k exceeds the number of labels");
  std::vector<std::size_t> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<long>(k), ids.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  ids.resize(k);
  return ids;
}

TopkSets topk_report(std::span<const double> scores, std::span<const std::size_t> truth, std::size_t k) {
  const auto top = predict_topk(scores, k);
  TopkSets out;
  for (std::size_t id : top) {
    const bool is_true = std::find(truth.begin(), truth.end(), id) != truth.end();
    (is_true ? out.tp : out.fp).push_back(id);
  }
  for (std::size_t id : truth) {
    if (std::find(top.begin(), top.end(), id) == top.end()) out.fn.push_back(id);
  }
  return out;
}

void write_label_csv(std::ostream& out, const CategoryReport& r) {
  out << "label_id,label_name,category,n_pos,n_neg,auc\n";
  std::vector<const LabelAuc*> rows;
  for (const auto& l : r.per_label) rows.push_back(&l);
  for (const auto& l : r.skipped) rows.push_back(&l);
  std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->label_id < b->label_id; });
  for (const auto* l : rows) {
    const bool defined = l->n_pos > 0 && l->n_neg > 0;
    out << l->label_id << ',' << l->name << ',' << to_string(l->category) << ',' << l->n_pos << ',' << l->n_neg << ','
        << (defined ? fmt(l->auc) : "NA") << '\n';
  }
}

void write_summary_csv(std::ostream& out, const CategoryReport& r, const std::string& method) {
  out << "method,overall,overall_std_over_labels,body_part,type,attribute,n_evaluated,n_skipped\n";
  auto cell = [](const std::optional<MeanStd>& m) { return m ? fmt(m->mean) : std::string("NA"); };
  out << method << ',' << fmt(r.overall.mean) << ',' << fmt(r.overall.std) << ',' << cell(r.body_part) << ','
      << cell(r.finding_type) << ',' << cell(r.attribute) << ',' << r.per_label.size() << ',' << r.skipped.size()
      << '\n';
}

void write_roc_csv(std::ostream& out, std::span<const RocPoint> pts) {
  out << "fpr,tpr\n";
  for (const auto& p : pts) out << fmt(p.fpr) << ',' << fmt(p.tpr) << '\n';
}

}  // namespace lesion
