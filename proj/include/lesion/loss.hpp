#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lesion/dataset.hpp"

namespace lesion {

enum class LossMode { plain, weighted, weighted_bootstrap };

std::string_view to_string(LossMode m);
std::optional<LossMode> parse_loss_mode(std::string_view s);

struct LossConfig {
  LossMode mode = LossMode::weighted_bootstrap;
  double beta = 0.9;
  double eps = 1e-7;  // scores are clamped to [eps, 1 - eps]

  void validate() const;
};

struct ClassWeights {
  std::vector<double> pos;
  std::vector<double> neg;

  std::size_t size() const { return pos.size(); }
  static ClassWeights uniform(std::size_t k);
};

// w_pos = N / (2 N_pos), w_neg = N / (2 N_neg). A side with zero count gets
// the count-of-one fallback N / 2; it never multiplies a nonzero term.
// Throws std::invalid_argument if a label has no cases at all.
ClassWeights class_weights(const LabelStats& stats);

inline double bootstrap_target(double y, double s, double beta) { return beta * y + (1.0 - beta) * s; }

// Per-label cross-entropy term with explicit weights; s is clamped first.
double label_loss(double y, double s, double w_pos, double w_neg, LossMode mode, double beta,
                  double eps);

// Sum over labels. Weights are ignored in plain mode; the bootstrapped
// target uses beta only in weighted_bootstrap mode.
double multilabel_loss(std::span<const double> y, std::span<const double> s, const ClassWeights& w,
                       const LossConfig& cfg);

// dL/ds with the bootstrapped target held constant.
std::vector<double> loss_gradient(std::span<const double> y, std::span<const double> s,
                                  const ClassWeights& w, const LossConfig& cfg);

}  // namespace lesion
