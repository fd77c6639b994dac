#include "lesion/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lesion/error.hpp"

namespace lesion {

std::string_view to_string(LossMode m) {
  switch (m) {
    case LossMode::plain:
      return "plain";
    case LossMode::weighted:
      return "weighted";
    case LossMode::weighted_bootstrap:
      return "weighted_bootstrap";
  }
  return "?";
}

std::optional<LossMode> parse_loss_mode(std::string_view s) {
  if (s == "plain") return LossMode::plain;
  if (s == "weighted") return LossMode::weighted;
  if (s == "weighted_bootstrap") return LossMode::weighted_bootstrap;
  return std::nullopt;
}

void LossConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("loss.beta must lie in [0, 1]");
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("loss.eps must lie in (0, 0.5)");
}

ClassWeights ClassWeights::uniform(std::size_t k) { return {std::vector<double>(k, 1.0), std::vector<double>(k, 1.0)}; }

ClassWeights class_weights(const LabelStats& stats) {
  ClassWeights w;
  w.pos.resize(stats.size());
  w.neg.resize(stats.size());
  for (std::size_t c = 0; c < stats.size(); ++c) {
    const double np = static_cast<double>(stats.n_pos[c]);
    const double nn = static_cast<double>(stats.n_neg[c]);
    const double n = np + nn;
    if (n == 0) throw std::invalid_argument("class_weights: label " + std::to_string(c) + " has no cases");
    w.pos[c] = n / (2.0 * std::max(np, 1.0));
    w.neg[c] = n / (2.0 * std::max(nn, 1.0));
  }
  return w;
}

namespace {

void check_lengths(std::span<const double> y, std::span<const double> s, const ClassWeights& w,
                   const LossConfig& cfg) {
  if (y.size() != s.size()) throw std::invalid_argument("loss: label and score lengths differ");
  if (cfg.mode != LossMode::plain && w.size() != y.size()) {
    throw std::invalid_argument("loss: class weight length differs from label count");
  }
}

}  // namespace

double label_loss(double y, double s, double w_pos, double w_neg, LossMode mode, double beta, double eps) {
  s = std::clamp(s, eps, 1.0 - eps);
  if (mode == LossMode::plain) w_pos = w_neg = 1.0;
  const double t = mode == LossMode::weighted_bootstrap ? bootstrap_target(y, s, beta) : y;
  return -(w_pos * t * std::log(s) + w_neg * (1.0 - t) * std::log(1.0 - s));
}

double multilabel_loss(std::span<const double> y, std::span<const double> s, const ClassWeights& w,
                       const LossConfig& cfg) {
  check_lengths(y, s, w, cfg);
  double total = 0.0;
  for (std::size_t c = 0; c < y.size(); ++c) {
    const double wp = cfg.mode == LossMode::plain ? 1.0 : w.pos[c];
    const double wn = cfg.mode == LossMode::plain ? 1.0 : w.neg[c];
    total += label_loss(y[c], s[c], wp, wn, cfg.mode, cfg.beta, cfg.eps);
  }
  return total;
}

std::vector<double> loss_gradient(std::span<const double> y, std::span<const double> s, const ClassWeights& w,
                                  const LossConfig& cfg) {
  check_lengths(y, s, w, cfg);
  std::vector<double> g(y.size());
  for (std::size_t c = 0; c < y.size(); ++c) {
    const double sc = std::clamp(s[c], cfg.eps, 1.0 - cfg.eps);
    const double wp = cfg.mode == LossMode::plain ? 1.0 : w.pos[c];
    const double wn = cfg.mode == LossMode::plain ? 1.0 : w.neg[c];
    const double t = cfg.mode == LossMode::weighted_bootstrap ? bootstrap_target(y[c], sc, cfg.beta) : y[c];
    g[c] = -(wp * t / sc - wn * (1.0 - t) / (1.0 - sc));
  }
  return g;
}

}  // namespace lesion
