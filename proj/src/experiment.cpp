#include "lesion/experiment.hpp"

#include "lesion/error.hpp"

namespace lesion {

Prepared prepare(const Ontology& o, std::span<const LesionRecord> train, const PatchStore& train_patches,
                 std::span<const LesionRecord> test, const EvalOptions& opts, unsigned threads) {
  if (train_patches.size() != train.size()) {
    throw DataError("training patches (" + std::to_string(train_patches.size()) + ") do not match records (" +
                    std::to_string(train.size()) + ")");
  }
  Prepared p;
  p.train = build_corpus(train, o, threads);
  p.test = build_corpus(test, o, threads);
  if (opts.use_truth) {
    for (auto& e : p.test) {
      if (auto t = truth_vector(e.record, o)) e.labels = std::move(*t);
    }
  }
  p.selection = filter_labels(p.test, o, opts.min_count, &p.train, opts.min_train_count);
  for (auto& e : p.train) e.labels = p.selection.apply(e.labels);
  for (auto& e : p.test) e.labels = p.selection.apply(e.labels);
  p.weights = class_weights(label_stats(p.train));
  p.samples.reserve(p.train.size());
  for (std::size_t i = 0; i < p.train.size(); ++i) {
    const auto& e = p.train[i];
    p.samples.push_back({train_patches.patch(i), e.record.bbox_mm, std::vector<double>(e.labels.begin(), e.labels.end())});
  }
  return p;
}

NetworkConfig network_for(const NetworkConfig& base, const Prepared& p) {
  NetworkConfig c = base;
  c.n_labels = p.selection.size();
  return c;
}

std::vector<std::vector<double>> score_all(const Network<float>& net, const Parameters<float>& params,
                                           std::span<const LesionRecord> records, const PatchStore& patches,
                                           unsigned threads) {
  if (patches.size() != records.size()) {
    throw DataError("patches (" + std::to_string(patches.size()) + ") do not match records (" +
                    std::to_string(records.size()) + ")");
  }
  std::vector<std::span<const float>> views;
  std::vector<Box> boxes;
  for (std::size_t i = 0; i < records.size(); ++i) {
    views.push_back(patches.patch(i));
    boxes.push_back(records[i].bbox_mm);
  }
  return predict_scores(net, params, views, boxes, threads);
}

CategoryReport evaluate_on(const Network<float>& net, const Parameters<float>& params, const Prepared& p,
                           const Ontology& o, const PatchStore& test_patches, unsigned threads) {
  std::vector<LesionRecord> records;
  std::vector<std::vector<std::uint8_t>> labels;
  for (const auto& e : p.test) {
    records.push_back(e.record);
    labels.push_back(e.labels);
  }
  const auto scores = score_all(net, params, records, test_patches, threads);
  return evaluate(scores, labels, p.selection.kept, o, threads);
}

}  // namespace lesion
