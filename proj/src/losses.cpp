#include "detlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "detlab/errors.hpp"

namespace detlab {

void LossConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw ValidationError("loss config: alpha must be >= 0");
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    throw ValidationError("loss config: gamma must be >= 0");
  if (!(beta_qfl >= 0.0) || !std::isfinite(beta_qfl))
    throw ValidationError("loss config: beta_qfl must be >= 0");
  if (!(lambda0 >= 0.0) || !(lambda1 >= 0.0))
    throw ValidationError("loss config: lambda weights must be >= 0");
}

namespace {

struct ClampedProb {
  double p;
  double dp;  // 0 where the clamp is active, 1 elsewhere
};

ClampedProb clamp_prob(double p) {
  if (p < kProbClamp) return {kProbClamp, 0.0};
  if (p > 1.0 - kProbClamp) return {1.0 - kProbClamp, 0.0};
  return {p, 1.0};
}

void check_target(double q) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw ValidationError("loss target q outside [0, 1]: " + std::to_string(q));
  }
}

ScalarLoss kernel(double p, const LocationTarget& target, int c,
                  const LossConfig& cfg) {
  switch (cfg.variant) {
    case LossVariant::kFocal:
      return focal_loss(p, c == target.label ? 1 : -1, cfg.alpha, cfg.gamma);
    case LossVariant::kQualityFocal:
      return quality_focal_loss(p, target.q[c], cfg.beta_qfl);
    case LossVariant::kVarifocal:
    default:
      return varifocal_loss(p, target.q[c], cfg.alpha, cfg.gamma,
                            cfg.q_weighting);
  }
}

}  // namespace

ScalarLoss focal_loss(double p, int y, double alpha, double gamma) {
  if (y != 1 && y != -1) {
    throw ValidationError("focal_loss: y must be +1 or -1");
  }
  const auto [pc, dp] = clamp_prob(p);
  ScalarLoss out;
  if (y == 1) {
    const double mod = std::pow(1.0 - pc, gamma);
    out.loss = -alpha * mod * std::log(pc);
    double d = -alpha * mod / pc;
    if (gamma != 0.0) {
      d += alpha * gamma * std::pow(1.0 - pc, gamma - 1.0) * std::log(pc);
    }
    out.dloss_dp = d * dp;
  } else {
    const double mod = std::pow(pc, gamma);
    out.loss = -(1.0 - alpha) * mod * std::log(1.0 - pc);
    double d = (1.0 - alpha) * mod / (1.0 - pc);
    if (gamma != 0.0) {
      d += -(1.0 - alpha) * gamma * std::pow(pc, gamma - 1.0) * std::log(1.0 - pc);
    }
    out.dloss_dp = d * dp;
  }
  return out;
}

ScalarLoss varifocal_loss(double p, double q, double alpha, double gamma,
                          bool q_weighting) {
  check_target(q);
  const auto [pc, dp] = clamp_prob(p);
  ScalarLoss out;
  if (q > 0.0) {
    const double bce = -(q * std::log(pc) + (1.0 - q) * std::log(1.0 - pc));
    const double dbce = -q / pc + (1.0 - q) / (1.0 - pc);
    const double w = q_weighting ? q : 1.0;
    out.loss = w * bce;
    out.dloss_dp = w * dbce * dp;
  } else {
    const double mod = std::pow(pc, gamma);
    out.loss = -alpha * mod * std::log(1.0 - pc);
    double d = alpha * mod / (1.0 - pc);
    if (gamma != 0.0) {
      d += -alpha * gamma * std::pow(pc, gamma - 1.0) * std::log(1.0 - pc);
    }
    out.dloss_dp = d * dp;
  }
  return out;
}

ScalarLoss quality_focal_loss(double p, double q, double beta) {
  check_target(q);
  const auto [pc, dp] = clamp_prob(p);
  ScalarLoss out;
  const double gap = std::abs(q - pc);
  const double mod = std::pow(gap, beta);
  const double bce = -(q * std::log(pc) + (1.0 - q) * std::log(1.0 - pc));
  const double dbce = -q / pc + (1.0 - q) / (1.0 - pc);
  out.loss = mod * bce;
  double d = mod * dbce;
  if (gap > 0.0 && beta != 0.0) {
    const double sign = pc > q ? 1.0 : -1.0;
    d += beta * std::pow(gap, beta - 1.0) * sign * bce;
  }
  out.dloss_dp = d * dp;
  return out;
}

TotalLoss total_loss(const std::vector<LocationPrediction>& predictions,
                     const std::vector<LocationTarget>& targets,
                     const LossConfig& cfg) {
  if (predictions.size() != targets.size()) {
    throw ValidationError("total_loss: predictions and targets misaligned");
  }
  TotalLoss out;
  out.grads.resize(predictions.size());

  for (const auto& t : targets) {
    if (t.gt.has_value()) ++out.num_pos;
  }
  const double norm = out.num_pos > 0 ? static_cast<double>(out.num_pos) : 1.0;

  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& pred = predictions[i];
    const auto& target = targets[i];
    if (pred.scores.size() != target.q.size()) {
      throw ValidationError("total_loss: score/target width mismatch at location " +
                            std::to_string(i));
    }
    auto& grad = out.grads[i];
    grad.dscores.assign(pred.scores.size(), 0.0);

    for (std::size_t c = 0; c < pred.scores.size(); ++c) {
      const ScalarLoss sl = kernel(pred.scores[c], target, static_cast<int>(c), cfg);
      out.value += sl.loss / norm;
      grad.dscores[c] = sl.dloss_dp / norm;
    }

    if (target.gt.has_value() && target.q_weight > 0.0) {
      const double w = target.q_weight;
      const GiouLossResult gi = giou_loss(pred.initial, *target.gt);
      const GiouLossResult gr = giou_loss(pred.refined, *target.gt);
      out.value += (cfg.lambda0 * w * gi.loss + cfg.lambda1 * w * gr.loss) / norm;
      for (int k = 0; k < 4; ++k) {
        grad.dinitial[k] = cfg.lambda0 * w * gi.grad[k] / norm;
        grad.drefined[k] = cfg.lambda1 * w * gr.grad[k] / norm;
      }
    }
  }
  return out;
}

}  // namespace detlab
