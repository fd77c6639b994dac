#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lesion/loss.hpp"
#include "lesion/model.hpp"

namespace lesion {

struct Schedule {
  std::size_t epochs = 15;
  double lr = 0.01;
  std::size_t lr_drop_epoch = 12;  // 1-based epoch from which lr_after_drop applies
  double lr_after_drop = 0.001;
  std::size_t batch_size = 128;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;  // data order; initialisation uses its own seed
  unsigned threads = 1;

  double lr_at(std::size_t epoch) const { return epoch >= lr_drop_epoch ? lr_after_drop : lr; }
  void validate() const;  // throws ConfigError
};

struct TrainSample {
  std::span<const float> patch;
  Box bbox_px;
  std::vector<double> labels;  // {0, 1}, one per network output
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double mean_loss = 0;
};

struct StepLoss {
  std::size_t step = 0, epoch = 0;
  double lr = 0, loss = 0;
};

template <class T>
struct TrainResult {
  Parameters<T> params;
  std::vector<EpochMetrics> epochs;
  std::vector<StepLoss> steps;
};

// Minibatch SGD on the mean per-sample loss. Per-sample gradients are summed
// in fixed-size chunks and the chunks reduced in order, so the result does
// not depend on the thread count. Throws TrainingError on a non-finite loss.
template <class T>
TrainResult<T> train(std::span<const TrainSample> data, const NetworkConfig& net, Parameters<T> init,
                     const LossConfig& loss, const ClassWeights& weights, const Schedule& schedule,
                     const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Scores for each sample, (samples x K).
template <class T>
std::vector<std::vector<double>> predict_scores(const Network<T>& net, const Parameters<T>& p,
                                                std::span<const std::span<const float>> patches,
                                                std::span<const Box> bboxes, unsigned threads = 1);

extern template TrainResult<float> train<float>(std::span<const TrainSample>, const NetworkConfig&, Parameters<float>,
                                                const LossConfig&, const ClassWeights&, const Schedule&,
                                                const std::function<void(const EpochMetrics&)>&);
extern template TrainResult<double> train<double>(std::span<const TrainSample>, const NetworkConfig&,
                                                  Parameters<double>, const LossConfig&, const ClassWeights&,
                                                  const Schedule&, const std::function<void(const EpochMetrics&)>&);

}  // namespace lesion
