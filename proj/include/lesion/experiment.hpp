#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lesion/config.hpp"
#include "lesion/dataset.hpp"
#include "lesion/eval.hpp"
#include "lesion/io.hpp"
#include "lesion/loss.hpp"
#include "lesion/train.hpp"

namespace lesion {

// Train/test data reduced to the evaluated label subset.
struct Prepared {
  LabelSelection selection;
  Corpus train;  // mined labels
  Corpus test;   // truth labels when available (and requested), mined otherwise
  ClassWeights weights;
  std::vector<TrainSample> samples;  // views into the train patches
};

// Mines both sides, picks the labels to evaluate and builds training
// samples. Patch stores must outlive the result.
Prepared prepare(const Ontology& o, std::span<const LesionRecord> train, const PatchStore& train_patches,
                 std::span<const LesionRecord> test, const EvalOptions& opts, unsigned threads = 1);

NetworkConfig network_for(const NetworkConfig& base, const Prepared& p);

// Scores every test patch and computes per-label AUCs on the kept labels.
CategoryReport evaluate_on(const Network<float>& net, const Parameters<float>& params, const Prepared& p,
                           const Ontology& o, const PatchStore& test_patches, unsigned threads = 1);

std::vector<std::vector<double>> score_all(const Network<float>& net, const Parameters<float>& params,
                                           std::span<const LesionRecord> records, const PatchStore& patches,
                                           unsigned threads = 1);

}  // namespace lesion
