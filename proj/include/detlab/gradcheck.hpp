#pragma once

#include <cstdint>

namespace detlab {

// Central finite-difference audit of every analytic gradient: the three
// scalar loss kernels, the GIoU box loss, and the full micro-head loss on a
// 4x4 grid with targets held fixed. Relative error uses
// |a - f| / max(|a|, |f|, floor) with floor 1e-6 for kernels and 1e-4 for
// the end-to-end check (absolute agreement below the floor counts as a
// match; finite differences carry ~1e-10 absolute noise of their own).
struct GradCheckReport {
  int kernel_samples = 0;
  double fl_max = 0.0;
  double vfl_max = 0.0;
  double qfl_max = 0.0;
  double giou_max = 0.0;
  double head_max = 0.0;
  int head_params = 0;

  bool pass(double kernel_tol = 1e-4, double head_tol = 1e-3) const {
    return fl_max < kernel_tol && vfl_max < kernel_tol && qfl_max < kernel_tol &&
           giou_max < kernel_tol && head_max < head_tol;
  }
};

GradCheckReport run_grad_check(int kernel_samples = 1000,
                               std::uint64_t seed = 0x5eed5eedULL);

}  // namespace detlab
