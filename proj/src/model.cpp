#include "lesion/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lesion/error.hpp"
#include "lesion/rng.hpp"

namespace lesion {

std::string_view to_string(RoiSource r) { return r == RoiSource::lesion ? "lesion" : "whole"; }

void NetworkConfig::validate() const {
  if (n_stages() < 2) throw ConfigError("network needs at least 2 stages");
  if (roi.size() != n_stages()) throw ConfigError("network needs one ROI source per stage");
  if (grid_h == 0 || grid_w == 0) throw ConfigError("ROI grid must be positive");
  if (n_labels == 0) throw ConfigError("network needs at least one label");
  if (fc_dim == 0 || in_channels == 0) throw ConfigError("fc_dim and in_channels must be positive");
  for (auto c : channels) {
    if (c == 0) throw ConfigError("stage channel counts must be positive");
  }
  if (stage_size(n_stages() - 1) == 0) throw ConfigError("input too small for the number of stages");
}

// ---------------------------------------------------------------------------
// Parameters

template <class T>
std::uint64_t Parameters<T>::next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter++;
}

template <class T>
Parameters<T>::Parameters(const NetworkConfig& cfg) : n_stages_(cfg.n_stages()) {
  cfg.validate();
  auto add = [&](std::string name, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    tensors_.push_back({std::move(name), std::move(shape), std::vector<T>(n, T(0))});
  };
  std::size_t cin = cfg.in_channels;
  for (std::size_t s = 0; s < cfg.n_stages(); ++s) {
    const auto cout = cfg.channels[s];
    add("conv" + std::to_string(s + 1) + ".weight", {cout, cin, 3, 3});
    add("conv" + std::to_string(s + 1) + ".bias", {cout});
    cin = cout;
  }
  for (std::size_t s = 0; s < cfg.n_stages(); ++s) {
    add("fc" + std::to_string(s + 1) + ".weight", {cfg.fc_dim, cfg.channels[s] * cfg.grid_h * cfg.grid_w});
    add("fc" + std::to_string(s + 1) + ".bias", {cfg.fc_dim});
  }
  add("out.weight", {cfg.n_labels, cfg.fc_dim * cfg.n_stages()});
  add("out.bias", {cfg.n_labels});
}

template <class T>
Parameters<T>::Parameters(const Parameters& other)
    : tensors_(other.tensors_), n_stages_(other.n_stages_), id_(next_id()), revision_(0) {}

template <class T>
Parameters<T>& Parameters<T>::operator=(const Parameters& other) {
  if (this != &other) {
    tensors_ = other.tensors_;
    n_stages_ = other.n_stages_;
    ++revision_;
  }
  return *this;
}

template <class T>
std::size_t Parameters<T>::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.data.size();
  return n;
}

template <class T>
void Parameters<T>::fill(T v) {
  for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), v);
  touch();
}

template <class T>
bool Parameters<T>::finite() const {
  for (const auto& t : tensors_) {
    for (T v : t.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

template <class T>
Parameters<T> init_parameters(const NetworkConfig& cfg, std::uint64_t seed) {
  Parameters<T> p(cfg);
  Rng rng(seed);
  for (auto& t : p.tensors()) {
    if (t.shape.size() == 1) continue;  // bias
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < t.shape.size(); ++d) fan_in *= t.shape[d];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  p.touch();
  return p;
}

template <class T>
Parameters<T> convert(const Parameters<double>& p, const NetworkConfig& cfg) {
  Parameters<T> out(cfg);
  if (out.tensors().size() != p.tensors().size()) throw std::invalid_argument("convert: layout mismatch");
  for (std::size_t i = 0; i < p.tensors().size(); ++i) {
    const auto& src = p.tensors()[i].data;
    auto& dst = out.tensors()[i].data;
    if (src.size() != dst.size()) throw std::invalid_argument("convert: tensor size mismatch");
    std::transform(src.begin(), src.end(), dst.begin(), [](double v) { return static_cast<T>(v); });
  }
  return out;
}

template <class T>
Parameters<double> widen(const Parameters<T>& p, const NetworkConfig& cfg) {
  Parameters<double> out(cfg);
  for (std::size_t i = 0; i < p.tensors().size(); ++i) {
    const auto& src = p.tensors()[i].data;
    auto& dst = out.tensors().at(i).data;
    if (src.size() != dst.size()) throw std::invalid_argument("widen: tensor size mismatch");
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// ROI pooling

RoiPx scale_roi(const Box& box_px, std::size_t stage, std::size_t map_h, std::size_t map_w) {
  const double scale = 1.0 / static_cast<double>(std::size_t{1} << stage);
  const double fy0 = std::floor(box_px.y0 * scale), fx0 = std::floor(box_px.x0 * scale);
  const double fy1 = std::ceil(box_px.y1 * scale), fx1 = std::ceil(box_px.x1 * scale);
  const auto h = static_cast<double>(map_h), w = static_cast<double>(map_w);
  if (!(fy1 > 0 && fx1 > 0 && fy0 < h && fx0 < w) || !(fy0 < fy1 && fx0 < fx1)) {
    throw std::domain_error("ROI lies entirely outside the feature map");
  }
  RoiPx r;
  r.y0 = static_cast<std::size_t>(std::max(0.0, fy0));
  r.x0 = static_cast<std::size_t>(std::max(0.0, fx0));
  r.y1 = static_cast<std::size_t>(std::min(h, fy1));
  r.x1 = static_cast<std::size_t>(std::min(w, fx1));
  r.y1 = std::max(r.y1, r.y0 + 1);
  r.x1 = std::max(r.x1, r.x0 + 1);
  return r;
}

namespace {

struct Bin {
  std::size_t begin, end;
};

// Integer round-half-up of i * extent / grid.
std::size_t bin_edge(std::size_t i, std::size_t extent, std::size_t grid) { return (2 * i * extent + grid) / (2 * grid); }

Bin bin_range(std::size_t i, std::size_t start, std::size_t extent, std::size_t grid) {
  std::size_t b = start + bin_edge(i, extent, grid);
  std::size_t e = start + bin_edge(i + 1, extent, grid);
  const std::size_t stop = start + extent;
  if (b >= stop) b = stop - 1;
  if (e <= b) e = b + 1;
  return {b, std::min(e, stop)};
}

}  // namespace

template <class T>
void roi_max_pool(std::span<const T> fmap, std::size_t channels, std::size_t h, std::size_t w, const RoiPx& roi,
                  std::size_t grid_h, std::size_t grid_w, std::span<T> out, std::span<std::uint32_t> argmax) {
  if (fmap.size() != channels * h * w) throw std::invalid_argument("roi_max_pool: map size mismatch");
  if (out.size() != channels * grid_h * grid_w || argmax.size() != out.size()) {
    throw std::invalid_argument("roi_max_pool: output size mismatch");
  }
  if (!(roi.y0 < roi.y1 && roi.x0 < roi.x1) || roi.y0 >= h || roi.x0 >= w) {
    throw std::domain_error("ROI lies entirely outside the feature map");
  }
  const std::size_t y1 = std::min(roi.y1, h), x1 = std::min(roi.x1, w);
  const std::size_t rh = y1 - roi.y0, rw = x1 - roi.x0;
  std::vector<Bin> rows(grid_h), cols(grid_w);
  for (std::size_t i = 0; i < grid_h; ++i) rows[i] = bin_range(i, roi.y0, rh, grid_h);
  for (std::size_t j = 0; j < grid_w; ++j) cols[j] = bin_range(j, roi.x0, rw, grid_w);

  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t base = c * h * w;
    for (std::size_t i = 0; i < grid_h; ++i) {
      for (std::size_t j = 0; j < grid_w; ++j) {
        std::size_t best = base + rows[i].begin * w + cols[j].begin;
        for (std::size_t y = rows[i].begin; y < rows[i].end; ++y) {
          for (std::size_t x = cols[j].begin; x < cols[j].end; ++x) {
            const std::size_t idx = base + y * w + x;
            if (fmap[idx] > fmap[best]) best = idx;
          }
        }
        const std::size_t o = (c * grid_h + i) * grid_w + j;
        out[o] = fmap[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Dense kernels

namespace {

// out[co] += sum_ci w[co,ci] (*) in[ci], 3x3, zero padding, same size.
template <class T>
void conv3x3_forward(const T* in, std::size_t cin, std::size_t h, std::size_t w, const T* weight, const T* bias,
                     std::size_t cout, T* out) {
  const std::size_t hw = h * w;
  for (std::size_t co = 0; co < cout; ++co) {
    T* oc = out + co * hw;
    std::fill(oc, oc + hw, bias[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const T* ic = in + ci * hw;
      const T* k = weight + (co * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const long dy = ky - 1;
        const T w0 = k[ky * 3], w1 = k[ky * 3 + 1], w2 = k[ky * 3 + 2];
        const std::size_t y_begin = dy < 0 ? 1 : 0;
        const std::size_t y_end = dy > 0 ? h - 1 : h;
        for (std::size_t y = y_begin; y < y_end; ++y) {
          const T* ir = ic + (static_cast<long>(y) + dy) * static_cast<long>(w);
          T* orow = oc + y * w;
          if (w == 1) {
            orow[0] += w1 * ir[0];
            continue;
          }
          orow[0] += w1 * ir[0] + w2 * ir[1];
          for (std::size_t x = 1; x + 1 < w; ++x) orow[x] += w0 * ir[x - 1] + w1 * ir[x] + w2 * ir[x + 1];
          orow[w - 1] += w0 * ir[w - 2] + w1 * ir[w - 1];
        }
      }
    }
  }
}

// dweight += dout (x) in; din += w^T (*) dout (din may be null).
template <class T>
void conv3x3_backward(const T* in, std::size_t cin, std::size_t h, std::size_t w, const T* weight, const T* dout,
                      std::size_t cout, T* dweight, T* dbias, T* din) {
  const std::size_t hw = h * w;
  std::vector<T> acc0(w), acc1(w), acc2(w);
  for (std::size_t co = 0; co < cout; ++co) {
    const T* dc = dout + co * hw;
    T db = 0;
    for (std::size_t i = 0; i < hw; ++i) db += dc[i];
    dbias[co] += db;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const T* ic = in + ci * hw;
      const T* k = weight + (co * cin + ci) * 9;
      T* dk = dweight + (co * cin + ci) * 9;
      T* dic = din ? din + ci * hw : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const long dy = ky - 1;
        const std::size_t y_begin = dy < 0 ? 1 : 0;
        const std::size_t y_end = dy > 0 ? h - 1 : h;
        std::fill(acc0.begin(), acc0.end(), T(0));
        std::fill(acc1.begin(), acc1.end(), T(0));
        std::fill(acc2.begin(), acc2.end(), T(0));
        const T w0 = k[ky * 3], w1 = k[ky * 3 + 1], w2 = k[ky * 3 + 2];
        for (std::size_t y = y_begin; y < y_end; ++y) {
          const long row = (static_cast<long>(y) + dy) * static_cast<long>(w);
          const T* ir = ic + row;
          const T* dr = dc + y * w;
          // acc_k[x] collects dout[x] * in[x + k - 1].
          for (std::size_t x = 0; x < w; ++x) acc1[x] += dr[x] * ir[x];
          for (std::size_t x = 1; x < w; ++x) acc0[x] += dr[x] * ir[x - 1];
          for (std::size_t x = 0; x + 1 < w; ++x) acc2[x] += dr[x] * ir[x + 1];
          if (dic) {
            T* drow = dic + row;
            for (std::size_t x = 0; x < w; ++x) drow[x] += w1 * dr[x];
            for (std::size_t x = 1; x < w; ++x) drow[x - 1] += w0 * dr[x];
            for (std::size_t x = 0; x + 1 < w; ++x) drow[x + 1] += w2 * dr[x];
          }
        }
        T s0 = 0, s1 = 0, s2 = 0;
        for (std::size_t x = 0; x < w; ++x) {
          s0 += acc0[x];
          s1 += acc1[x];
          s2 += acc2[x];
        }
        dk[ky * 3] += s0;
        dk[ky * 3 + 1] += s1;
        dk[ky * 3 + 2] += s2;
      }
    }
  }
}

template <class T>
void maxpool2_forward(const T* in, std::size_t c, std::size_t h, std::size_t w, T* out, std::uint32_t* argmax) {
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (k * h + 2 * y) * w + 2 * x;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (auto idx : cand) {
          if (in[idx] > in[best]) best = idx;
        }
        const std::size_t o = (k * oh + y) * ow + x;
        out[o] = in[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

// out[o] = relu(b[o] + W[o,:] . x)
template <class T>
void dense_relu(const T* weight, const T* bias, const T* x, std::size_t n_in, std::size_t n_out, T* out) {
  for (std::size_t o = 0; o < n_out; ++o) {
    const T* wr = weight + o * n_in;
    T acc = bias[o];
    for (std::size_t i = 0; i < n_in; ++i) acc += wr[i] * x[i];
    out[o] = acc > T(0) ? acc : T(0);
  }
}

template <class T>
double sigmoid(T z) {
  const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(z)));
  return std::clamp(s, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

}  // namespace

// ---------------------------------------------------------------------------
// Network

template <class T>
Network<T>::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

template <class T>
void Network<T>::forward(const Parameters<T>& p, std::span<const float> patch, const Box& bbox_px,
                         ForwardState<T>& st) const {
  const auto& cfg = cfg_;
  const std::size_t n_stages = cfg.n_stages();
  if (patch.size() != cfg.in_channels * cfg.in_size * cfg.in_size) {
    throw std::invalid_argument("forward: patch shape does not match the network config");
  }
  if (p.tensors().size() != 4 * n_stages + 2 || p.out_bias().data.size() != cfg.n_labels) {
    throw std::invalid_argument("forward: parameters do not match the network config");
  }
  st.valid = false;
  st.stages.resize(n_stages);
  const std::size_t grid = cfg.grid_h * cfg.grid_w;

  std::size_t cin = cfg.in_channels;
  for (std::size_t s = 0; s < n_stages; ++s) {
    auto& stage = st.stages[s];
    const std::size_t h = cfg.stage_size(s), w = h, cout = cfg.channels[s];
    stage.h = h;
    stage.w = w;
    if (s == 0) {
      stage.input.assign(patch.begin(), patch.end());
    } else {
      auto& prev = st.stages[s - 1];
      stage.input.resize(cin * h * w);
      prev.down_argmax.resize(cin * h * w);
      maxpool2_forward(prev.activation.data(), cin, prev.h, prev.w, stage.input.data(), prev.down_argmax.data());
    }
    stage.activation.resize(cout * h * w);
    conv3x3_forward(stage.input.data(), cin, h, w, p.conv_weight(s).data.data(), p.conv_bias(s).data.data(), cout,
                    stage.activation.data());
    for (auto& v : stage.activation) v = v > T(0) ? v : T(0);

    stage.roi = cfg.roi[s] == RoiSource::whole ? RoiPx{0, 0, h, w} : scale_roi(bbox_px, s, h, w);
    stage.pooled.resize(cout * grid);
    stage.roi_argmax.resize(cout * grid);
    roi_max_pool<T>(stage.activation, cout, h, w, stage.roi, cfg.grid_h, cfg.grid_w, stage.pooled, stage.roi_argmax);

    stage.fc.resize(cfg.fc_dim);
    dense_relu(p.fc_weight(s).data.data(), p.fc_bias(s).data.data(), stage.pooled.data(), cout * grid, cfg.fc_dim,
               stage.fc.data());
    cin = cout;
  }
  st.stages.back().down_argmax.clear();

  st.features.resize(cfg.fc_dim * n_stages);
  for (std::size_t s = 0; s < n_stages; ++s) {
    std::copy(st.stages[s].fc.begin(), st.stages[s].fc.end(), st.features.begin() + static_cast<long>(s * cfg.fc_dim));
  }
  st.logits.resize(cfg.n_labels);
  st.scores.resize(cfg.n_labels);
  const auto& wo = p.out_weight().data;
  const auto& bo = p.out_bias().data;
  const std::size_t nf = st.features.size();
  for (std::size_t k = 0; k < cfg.n_labels; ++k) {
    T acc = bo[k];
    for (std::size_t i = 0; i < nf; ++i) acc += wo[k * nf + i] * st.features[i];
    st.logits[k] = acc;
    st.scores[k] = sigmoid(acc);
  }
  st.params_id = p.id();
  st.params_revision = p.revision();
  st.valid = true;
}

template <class T>
ForwardState<T> Network<T>::forward(const Parameters<T>& p, const Patch& patch) const {
  ForwardState<T> st;
  forward(p, patch.pixels, patch.lesion_bbox_px, st);
  return st;
}

template <class T>
void Network<T>::backward(const Parameters<T>& p, const ForwardState<T>& st, std::span<const double> dl_dscores,
                          Parameters<T>& grads) const {
  const auto& cfg = cfg_;
  if (!st.valid || st.params_id != p.id() || st.params_revision != p.revision()) {
    throw std::logic_error("backward: forward state is stale for these parameters");
  }
  if (dl_dscores.size() != cfg.n_labels) throw std::invalid_argument("backward: gradient length mismatch");
  const std::size_t n_stages = cfg.n_stages();
  const std::size_t nf = st.features.size();
  auto& g = grads.tensors();

  // Output layer.
  std::vector<T> dfeat(nf, T(0));
  {
    const auto& wo = p.out_weight().data;
    auto& dwo = g[4 * n_stages].data;
    auto& dbo = g[4 * n_stages + 1].data;
    for (std::size_t k = 0; k < cfg.n_labels; ++k) {
      const double s = st.scores[k];
      const T dz = static_cast<T>(dl_dscores[k] * s * (1.0 - s));
      if (dz == T(0)) continue;
      dbo[k] += dz;
      T* dw = dwo.data() + k * nf;
      const T* w = wo.data() + k * nf;
      for (std::size_t i = 0; i < nf; ++i) {
        dw[i] += dz * st.features[i];
        dfeat[i] += dz * w[i];
      }
    }
  }

  const std::size_t grid = cfg.grid_h * cfg.grid_w;
  std::vector<T> dact;      // gradient w.r.t. this stage's activation
  std::vector<T> dnext_in;  // gradient w.r.t. next stage's input
  for (std::size_t si = n_stages; si-- > 0;) {
    const auto& stage = st.stages[si];
    const std::size_t cout = cfg.channels[si];
    const std::size_t cin = si == 0 ? cfg.in_channels : cfg.channels[si - 1];
    const std::size_t hw = stage.h * stage.w;
    dact.assign(cout * hw, T(0));

    // Per-stage FC with ReLU.
    const std::size_t n_in = cout * grid;
    const auto& wf = p.fc_weight(si).data;
    auto& dwf = g[2 * n_stages + 2 * si].data;
    auto& dbf = g[2 * n_stages + 2 * si + 1].data;
    std::vector<T> dpooled(n_in, T(0));
    for (std::size_t o = 0; o < cfg.fc_dim; ++o) {
      if (stage.fc[o] <= T(0)) continue;
      const T d = dfeat[si * cfg.fc_dim + o];
      if (d == T(0)) continue;
      dbf[o] += d;
      T* dw = dwf.data() + o * n_in;
      const T* w = wf.data() + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) {
        dw[i] += d * stage.pooled[i];
        dpooled[i] += d * w[i];
      }
    }
    for (std::size_t i = 0; i < n_in; ++i) dact[stage.roi_argmax[i]] += dpooled[i];

    // Contribution through the 2x2 pool into the next stage.
    if (si + 1 < n_stages) {
      for (std::size_t i = 0; i < dnext_in.size(); ++i) dact[stage.down_argmax[i]] += dnext_in[i];
    }
    for (std::size_t i = 0; i < dact.size(); ++i) {
      if (stage.activation[i] <= T(0)) dact[i] = T(0);
    }

    std::vector<T> din;
    if (si > 0) din.assign(cin * hw, T(0));
    conv3x3_backward(stage.input.data(), cin, stage.h, stage.w, p.conv_weight(si).data.data(), dact.data(), cout,
                     g[2 * si].data.data(), g[2 * si + 1].data.data(), si > 0 ? din.data() : nullptr);
    dnext_in = std::move(din);
  }
}

template <class T>
Parameters<T> Network<T>::backward(const Parameters<T>& p, const ForwardState<T>& st,
                                   std::span<const double> dl_dscores) const {
  Parameters<T> grads(cfg_);
  backward(p, st, dl_dscores, grads);
  return grads;
}

template class Parameters<float>;
template class Parameters<double>;
template class Network<float>;
template class Network<double>;

template Parameters<float> init_parameters<float>(const NetworkConfig&, std::uint64_t);
template Parameters<double> init_parameters<double>(const NetworkConfig&, std::uint64_t);
template Parameters<float> convert<float>(const Parameters<double>&, const NetworkConfig&);
template Parameters<double> convert<double>(const Parameters<double>&, const NetworkConfig&);
template Parameters<double> widen<float>(const Parameters<float>&, const NetworkConfig&);
template Parameters<double> widen<double>(const Parameters<double>&, const NetworkConfig&);
template void roi_max_pool<float>(std::span<const float>, std::size_t, std::size_t, std::size_t, const RoiPx&,
                                  std::size_t, std::size_t, std::span<float>, std::span<std::uint32_t>);
template void roi_max_pool<double>(std::span<const double>, std::size_t, std::size_t, std::size_t, const RoiPx&,
                                   std::size_t, std::size_t, std::span<double>, std::span<std::uint32_t>);

}  // namespace lesion
