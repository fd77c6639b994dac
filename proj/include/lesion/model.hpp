#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lesion/dataset.hpp"
#include "lesion/preprocess.hpp"

namespace lesion {

enum class RoiSource { lesion, whole };

std::string_view to_string(RoiSource r);

// Stage s (0-based) has a 3x3 same-padded conv + ReLU; its output is ROI
// max-pooled to grid_h x grid_w and fed to a per-stage FC + ReLU, and 2x2
// max-pooled to form the input of stage s + 1. Per-stage FC outputs are
// concatenated and mapped to K logits.
struct NetworkConfig {
  std::size_t in_channels = kPatchChannels;
  std::size_t in_size = kPatchSize;
  std::vector<std::size_t> channels{8, 16, 16, 32, 32};
  std::vector<RoiSource> roi{RoiSource::lesion, RoiSource::lesion, RoiSource::lesion, RoiSource::whole,
                             RoiSource::whole};
  std::size_t grid_h = 5, grid_w = 5;
  std::size_t fc_dim = 32;
  std::size_t n_labels = 1;

  std::size_t n_stages() const { return channels.size(); }
  std::size_t stage_size(std::size_t s) const { return in_size >> s; }
  // Throws ConfigError.
  void validate() const;
};

template <class T>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> data;
};

// Parameter tensors in a fixed order: conv{s}.weight, conv{s}.bias for every
// stage, then fc{s}.weight, fc{s}.bias, then out.weight, out.bias.
template <class T>
class Parameters {
 public:
  Parameters() = default;
  explicit Parameters(const NetworkConfig& cfg);  // all zeros

  Parameters(const Parameters& other);
  Parameters& operator=(const Parameters& other);
  Parameters(Parameters&&) noexcept = default;
  Parameters& operator=(Parameters&&) noexcept = default;

  std::vector<Tensor<T>>& tensors() { return tensors_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  const Tensor<T>& conv_weight(std::size_t s) const { return tensors_[2 * s]; }
  const Tensor<T>& conv_bias(std::size_t s) const { return tensors_[2 * s + 1]; }
  const Tensor<T>& fc_weight(std::size_t s) const { return tensors_[2 * n_stages_ + 2 * s]; }
  const Tensor<T>& fc_bias(std::size_t s) const { return tensors_[2 * n_stages_ + 2 * s + 1]; }
  const Tensor<T>& out_weight() const { return tensors_[4 * n_stages_]; }
  const Tensor<T>& out_bias() const { return tensors_[4 * n_stages_ + 1]; }

  std::size_t count() const;
  void fill(T v);
  bool finite() const;

  // Identity + revision let backward() reject a state produced with other
  // or since-modified parameters. Call touch() after every in-place update.
  std::uint64_t id() const { return id_; }
  std::uint64_t revision() const { return revision_; }
  void touch() { ++revision_; }

 private:
  std::vector<Tensor<T>> tensors_;
  std::size_t n_stages_ = 0;
  std::uint64_t id_ = next_id();
  std::uint64_t revision_ = 0;

  static std::uint64_t next_id();
};

// Uniform He initialisation, bound sqrt(6 / fan_in); biases zero.
template <class T>
Parameters<T> init_parameters(const NetworkConfig& cfg, std::uint64_t seed);

template <class T>
Parameters<T> convert(const Parameters<double>& p, const NetworkConfig& cfg);
template <class T>
Parameters<double> widen(const Parameters<T>& p, const NetworkConfig& cfg);

// Half-open integer pixel box on a feature map.
struct RoiPx {
  std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;
};

// Maps a patch-frame box onto stage s (stride 2^s): floor/ceil to whole
// pixels, clamped to the map, at least one pixel. Throws std::domain_error if
// the box misses the map entirely.
RoiPx scale_roi(const Box& box_px, std::size_t stage, std::size_t map_h, std::size_t map_w);

// Bin i spans [round(i*h/g), round((i+1)*h/g)) relative to the ROI start,
// widened to at least one pixel and kept inside the ROI. out has
// channels*grid_h*grid_w entries; argmax holds flat indices into fmap.
template <class T>
void roi_max_pool(std::span<const T> fmap, std::size_t channels, std::size_t h, std::size_t w, const RoiPx& roi,
                  std::size_t grid_h, std::size_t grid_w, std::span<T> out, std::span<std::uint32_t> argmax);

template <class T>
struct ForwardState {
  struct Stage {
    std::size_t h = 0, w = 0;
    std::vector<T> input;        // stage input (C_in x h x w)
    std::vector<T> activation;   // post-ReLU conv output (C x h x w)
    std::vector<std::uint32_t> down_argmax;  // 2x2 pool winners feeding the next stage
    RoiPx roi;
    std::vector<T> pooled;
    std::vector<std::uint32_t> roi_argmax;
    std::vector<T> fc;           // post-ReLU
  };

  std::uint64_t params_id = 0;
  std::uint64_t params_revision = 0;
  bool valid = false;
  std::vector<Stage> stages;
  std::vector<T> features;  // concatenated fc outputs
  std::vector<T> logits;
  std::vector<double> scores;
};

template <class T>
class Network {
 public:
  explicit Network(NetworkConfig cfg);

  const NetworkConfig& config() const { return cfg_; }

  // patch: in_channels x in_size x in_size values; bbox in patch pixels.
  void forward(const Parameters<T>& p, std::span<const float> patch, const Box& bbox_px, ForwardState<T>& st) const;
  ForwardState<T> forward(const Parameters<T>& p, const Patch& patch) const;

  // Adds dL/dparameters into grads. Throws std::logic_error on a stale state.
  void backward(const Parameters<T>& p, const ForwardState<T>& st, std::span<const double> dl_dscores,
                Parameters<T>& grads) const;
  Parameters<T> backward(const Parameters<T>& p, const ForwardState<T>& st, std::span<const double> dl_dscores) const;

 private:
  NetworkConfig cfg_;
};

extern template class Parameters<float>;
extern template class Parameters<double>;
extern template class Network<float>;
extern template class Network<double>;

}  // namespace lesion
