#include "lesion/train.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "lesion/error.hpp"
#include "lesion/parallel.hpp"
#include "lesion/rng.hpp"

namespace lesion {

void Schedule::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(lr >= 0) || !(lr_after_drop >= 0)) throw ConfigError("learning rates must be non-negative");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be non-negative");
}

namespace {

constexpr std::size_t kChunk = 16;

template <class T>
void zero(Parameters<T>& p) {
  for (auto& t : p.tensors()) std::fill(t.data.begin(), t.data.end(), T(0));
}

}  // namespace

template <class T>
TrainResult<T> train(std::span<const TrainSample> data, const NetworkConfig& net_cfg, Parameters<T> init,
                     const LossConfig& loss, const ClassWeights& weights, const Schedule& schedule,
                     const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (data.empty()) throw DataError("training set is empty");
  schedule.validate();
  loss.validate();
  const Network<T> net(net_cfg);
  for (const auto& s : data) {
    if (s.labels.size() != net_cfg.n_labels) throw DataError("training label vector does not match K");
  }
  if (loss.mode != LossMode::plain && weights.size() != net_cfg.n_labels) {
    throw DataError("class weights do not match K");
  }

  TrainResult<T> result{std::move(init), {}, {}};
  Parameters<T>& params = result.params;
  Parameters<T> velocity(net_cfg);

  const std::size_t max_chunks = (schedule.batch_size + kChunk - 1) / kChunk;
  std::vector<Parameters<T>> chunk_grads;
  std::vector<ForwardState<T>> states(max_chunks);
  std::vector<double> chunk_loss(max_chunks);
  for (std::size_t i = 0; i < max_chunks; ++i) chunk_grads.emplace_back(net_cfg);

  std::vector<std::size_t> order(data.size());
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(schedule.seed, epoch));
    rng.shuffle(std::span(order));
    const double lr = schedule.lr_at(epoch);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t batch = std::min(schedule.batch_size, order.size() - start);
      const std::size_t n_chunks = (batch + kChunk - 1) / kChunk;
      parallel_for(n_chunks, schedule.threads, [&](std::size_t c) {
        auto& grads = chunk_grads[c];
        zero(grads);
        auto& st = states[c];
        double sum = 0.0;
        const std::size_t end = std::min(batch, (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) {
          const TrainSample& s = data[order[start + i]];
          net.forward(params, s.patch, s.bbox_px, st);
          sum += multilabel_loss(s.labels, st.scores, weights, loss);
          const auto dl = loss_gradient(s.labels, st.scores, weights, loss);
          net.backward(params, st, dl, grads);
        }
        chunk_loss[c] = sum;
      });

      double batch_loss = 0.0;
      for (std::size_t c = 0; c < n_chunks; ++c) batch_loss += chunk_loss[c];
      batch_loss /= static_cast<double>(batch);
      ++step;
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                            " (lr " + std::to_string(lr) + "); lower the learning rate");
      }
      result.steps.push_back({step, epoch, lr, batch_loss});
      epoch_loss += batch_loss * static_cast<double>(batch);

      const T scale = static_cast<T>(1.0 / static_cast<double>(batch));
      const T mu = static_cast<T>(schedule.momentum);
      const T rate = static_cast<T>(lr);
      const T decay = static_cast<T>(schedule.weight_decay);
      auto& pt = params.tensors();
      auto& vt = velocity.tensors();
      for (std::size_t t = 0; t < pt.size(); ++t) {
        auto& w = pt[t].data;
        auto& v = vt[t].data;
        for (std::size_t i = 0; i < w.size(); ++i) {
          T g = T(0);
          for (std::size_t c = 0; c < n_chunks; ++c) g += chunk_grads[c].tensors()[t].data[i];
          g = g * scale + decay * w[i];
          v[i] = mu * v[i] - rate * g;
          w[i] += v[i];
        }
      }
      params.touch();
    }
    if (!params.finite()) {
      throw TrainingError("parameters became non-finite in epoch " + std::to_string(epoch));
    }
    EpochMetrics m{epoch, lr, epoch_loss / static_cast<double>(data.size())};
    result.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return result;
}

template <class T>
std::vector<std::vector<double>> predict_scores(const Network<T>& net, const Parameters<T>& p,
                                                std::span<const std::span<const float>> patches,
                                                std::span<const Box> bboxes, unsigned threads) {
  if (patches.size() != bboxes.size()) throw std::invalid_argument("predict_scores: patch/bbox count mismatch");
  std::vector<std::vector<double>> out(patches.size());
  const std::size_t blocks = (patches.size() + kChunk - 1) / kChunk;
  parallel_for(blocks, threads, [&](std::size_t b) {
    ForwardState<T> st;
    const std::size_t end = std::min(patches.size(), (b + 1) * kChunk);
    for (std::size_t i = b * kChunk; i < end; ++i) {
      net.forward(p, patches[i], bboxes[i], st);
      out[i] = st.scores;
    }
  });
  return out;
}

template TrainResult<float> train<float>(std::span<const TrainSample>, const NetworkConfig&, Parameters<float>,
                                         const LossConfig&, const ClassWeights&, const Schedule&,
                                         const std::function<void(const EpochMetrics&)>&);
template TrainResult<double> train<double>(std::span<const TrainSample>, const NetworkConfig&, Parameters<double>,
                                           const LossConfig&, const ClassWeights&, const Schedule&,
                                           const std::function<void(const EpochMetrics&)>&);
template std::vector<std::vector<double>> predict_scores<float>(const Network<float>&, const Parameters<float>&,
                                                                std::span<const std::span<const float>>,
                                                                std::span<const Box>, unsigned);
template std::vector<std::vector<double>> predict_scores<double>(const Network<double>&, const Parameters<double>&,
                                                                 std::span<const std::span<const float>>,
                                                                 std::span<const Box>, unsigned);

}  // namespace lesion
