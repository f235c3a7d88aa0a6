#pragma once

#include <array>
#include <optional>
#include <vector>

#include "detlab/geometry.hpp"

namespace detlab {

enum class LossVariant { kFocal, kVarifocal, kQualityFocal };

struct LossConfig {
  double alpha = 0.75;     // negative-branch balance
  double gamma = 2.0;      // down-weighting exponent
  double beta_qfl = 2.0;   // quality-focal exponent
  double lambda0 = 1.5;    // weight on the initial-box term
  double lambda1 = 2.0;    // weight on the refined-box term
  bool q_weighting = true;
  LossVariant variant = LossVariant::kVarifocal;

  void validate() const;  // throws ValidationError
};

struct ScalarLoss {
  double loss = 0.0;
  double dloss_dp = 0.0;
};

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any
// logarithm; gradients are of the clamped expression.
inline constexpr double kProbClamp = 1e-12;

// -alpha (1-p)^gamma log(p) for y = +1; -(1-alpha) p^gamma log(1-p) for
// y = -1.
ScalarLoss focal_loss(double p, int y, double alpha, double gamma);

// q > 0: -q (q log p + (1-q) log(1-p)) when q_weighting is on, plain
// BCE(p, q) when off. q = 0: -alpha p^gamma log(1-p).
// Throws ValidationError for q outside [0, 1].
ScalarLoss varifocal_loss(double p, double q, double alpha, double gamma,
                          bool q_weighting);

// |q - p|^beta * BCE(p, q). Throws ValidationError for q outside [0, 1].
ScalarLoss quality_focal_loss(double p, double q, double beta);

struct LocationPrediction {
  std::vector<double> scores;  // per-class probabilities in [0, 1]
  BBox initial;
  BBox refined;
};

struct LocationTarget {
  std::vector<double> q;      // per-class targets, at most one nonzero
  std::optional<BBox> gt;     // present for foreground locations
  double q_weight = 0.0;      // shared weight on both box-loss terms
  int label = -1;             // foreground class id, -1 for background
};

struct LocationGradient {
  std::vector<double> dscores;
  std::array<double, 4> dinitial{};  // d/d(x1,y1,x2,y2) of the initial box
  std::array<double, 4> drefined{};
};

struct TotalLoss {
  double value = 0.0;
  std::vector<LocationGradient> grads;
  int num_pos = 0;
};

// (1/Npos) sum_i sum_c cls(p_ci, q_ci) + (lambda0/Npos) sum_i qw_i *
// giou_loss(initial_i, gt_i) + (lambda1/Npos) sum_i qw_i *
// giou_loss(refined_i, gt_i), with cls the configured variant. Npos is the
// number of foreground locations; a batch with none normalizes by 1 and has
// no box terms. Summation is sequential in location order.
TotalLoss total_loss(const std::vector<LocationPrediction>& predictions,
                     const std::vector<LocationTarget>& targets,
                     const LossConfig& cfg);

}  // namespace detlab
