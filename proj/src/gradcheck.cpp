#include "detlab/gradcheck.hpp"

#include <cmath>

#include "detlab/errors.hpp"
#include "detlab/losses.hpp"
#include "detlab/rng.hpp"
#include "detlab/trainer.hpp"

namespace detlab {

namespace {

constexpr double kH = 1e-6;

double rel_err(double analytic, double fd, double floor) {
  const double scale = std::max({std::fabs(analytic), std::fabs(fd), floor});
  return std::fabs(analytic - fd) / scale;
}

BBox random_box(Rng& rng) {
  const double cx = rng.uniform(0.0, 20.0);
  const double cy = rng.uniform(0.0, 20.0);
  const double w = rng.uniform(1.0, 10.0);
  const double h = rng.uniform(1.0, 10.0);
  return {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

}  // namespace

GradCheckReport run_grad_check(int kernel_samples, std::uint64_t seed) {
  if (kernel_samples <= 0)
    throw ValidationError("grad check: sample count must be positive");

  GradCheckReport report;
  report.kernel_samples = kernel_samples;
  Rng rng(mix_seed(seed, 11));

  for (int s = 0; s < kernel_samples; ++s) {
    const double p = rng.uniform(0.01, 0.99);
    const double alpha = rng.uniform(0.0, 1.0);
    const double gamma = rng.uniform(0.0, 4.0);
    const double beta = rng.uniform(1.0, 4.0);
    const double q = (s % 4 == 0) ? 0.0 : rng.uniform(0.0, 1.0);
    const bool qw = s % 2 == 0;
    const int y = s % 2 == 0 ? 1 : -1;

    {
      const double a = focal_loss(p, y, alpha, gamma).dloss_dp;
      const double f = (focal_loss(p + kH, y, alpha, gamma).loss -
                        focal_loss(p - kH, y, alpha, gamma).loss) /
                       (2.0 * kH);
      report.fl_max = std::max(report.fl_max, rel_err(a, f, 1e-6));
    }
    {
      const double a = varifocal_loss(p, q, alpha, gamma, qw).dloss_dp;
      const double f = (varifocal_loss(p + kH, q, alpha, gamma, qw).loss -
                        varifocal_loss(p - kH, q, alpha, gamma, qw).loss) /
                       (2.0 * kH);
      report.vfl_max = std::max(report.vfl_max, rel_err(a, f, 1e-6));
    }
    {
      const double a = quality_focal_loss(p, q, beta).dloss_dp;
      const double f = (quality_focal_loss(p + kH, q, beta).loss -
                        quality_focal_loss(p - kH, q, beta).loss) /
                       (2.0 * kH);
      report.qfl_max = std::max(report.qfl_max, rel_err(a, f, 1e-6));
    }
    {
      const BBox pred = random_box(rng);
      const BBox gt = random_box(rng);
      const GiouLossResult res = giou_loss(pred, gt);
      double corners[4] = {pred.x1, pred.y1, pred.x2, pred.y2};
      for (int c = 0; c < 4; ++c) {
        double plus[4] = {corners[0], corners[1], corners[2], corners[3]};
        double minus[4] = {corners[0], corners[1], corners[2], corners[3]};
        plus[c] += kH;
        minus[c] -= kH;
        const BBox bp{plus[0], plus[1], plus[2], plus[3]};
        const BBox bm{minus[0], minus[1], minus[2], minus[3]};
        const double f = (giou_loss(bp, gt).loss - giou_loss(bm, gt).loss) / (2.0 * kH);
        report.giou_max = std::max(report.giou_max, rel_err(res.grad[c], f, 1e-6));
      }
    }
  }

  // end-to-end: micro head on a 4x4 grid, targets frozen at the base point
  SceneSpec spec;
  spec.width = 32.0;
  spec.height = 32.0;
  spec.min_objects = 1;
  spec.max_objects = 2;
  spec.num_classes = 3;
  spec.min_size = 8.0;
  spec.max_size = 20.0;
  spec.noise = 0.1;
  GridSpec grid{{LevelSpec{8, 4, 4}}};
  HeadConfig head_cfg;
  head_cfg.feature_dim = 8;
  head_cfg.num_classes = 3;
  LossConfig loss_cfg;

  Rng scene_rng(mix_seed(seed, 12));
  const SceneRecord scene = generate_scene(scene_rng, spec);
  const FeatureGrid features =
      render_features(scene, grid, head_cfg.feature_dim, head_cfg.num_classes);

  MicroHead head = init_head(head_cfg, mix_seed(seed, 13));
  const auto outs = forward(head, features);
  const auto targets = make_targets(outs, grid, scene.objects,
                                    head_cfg.num_classes, 9, true);

  const SceneLoss base = loss_with_targets(head, features, targets, loss_cfg);
  report.head_params = static_cast<int>(head.params.size());
  for (std::size_t i = 0; i < head.params.size(); ++i) {
    const double saved = head.params[i];
    head.params[i] = saved + kH;
    const double lp = loss_with_targets(head, features, targets, loss_cfg).loss;
    head.params[i] = saved - kH;
    const double lm = loss_with_targets(head, features, targets, loss_cfg).loss;
    head.params[i] = saved;
    const double f = (lp - lm) / (2.0 * kH);
    report.head_max = std::max(report.head_max, rel_err(base.grad[i], f, 1e-4));
  }
  return report;
}

}  // namespace detlab
