#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "detlab/features.hpp"
#include "detlab/geometry.hpp"
#include "detlab/losses.hpp"
#include "detlab/rng.hpp"

namespace detlab {

struct HeadConfig {
  int feature_dim = 16;
  int num_classes = 3;
  double init_dist = 8.0;  // initial distances start near this many pixels
};

// Flat-parameter layout of the micro head:
//   w_init (4 x D)  b_init (4)   initial-distance logits from the raw cell
//   mix    (9 x D x D)           star-sample mixing blocks
//   w_ref  (4 x D)  b_ref (4)    refinement scale logits from mixed features
//   w_cls  (C x D)  b_cls (C)    class logits from mixed features
// Distances and scales go through exp, scores through sigmoid.
struct ParamLayout {
  int w_init = 0;
  int b_init = 0;
  int mix = 0;
  int w_ref = 0;
  int b_ref = 0;
  int w_cls = 0;
  int b_cls = 0;
  int total = 0;
};

ParamLayout param_layout(const HeadConfig& cfg);

struct MicroHead {
  HeadConfig cfg;
  std::vector<double> params;
};

// Uniform [-0.1, 0.1] weights; classifier bias set so initial scores sit
// near 0.01, distance bias set to log(init_dist) so initial boxes start at
// a workable size instead of one pixel (with degenerate boxes every
// IoU-derived target and loss weight is near zero and training stalls).
MicroHead init_head(const HeadConfig& cfg, std::uint64_t seed);

struct ForwardOptions {
  bool freeze_scales = false;  // refinement ablation: scales pinned to 1
};

struct LocationOutput {
  Point anchor;
  int level = 0;
  std::vector<double> scores;
  DistanceVector initial;
  RefineScales scales;
  DistanceVector refined;
  BBox initial_box;
  BBox refined_box;
  double ctr = 0.0;  // centerness of the refined distances, the stand-in
                     // for a predicted centerness branch
};

// Forward pass retaining the intermediates needed for backward. outputs()
// are flattened in GridSpec order (level-major, row-major).
class HeadForward {
 public:
  HeadForward(const MicroHead& head, const FeatureGrid& features,
              const ForwardOptions& opts = {});
  ~HeadForward();
  HeadForward(HeadForward&&) noexcept;
  HeadForward& operator=(HeadForward&&) noexcept;

  const std::vector<LocationOutput>& outputs() const { return outputs_; }

  // Chains per-location gradients w.r.t. scores and box corners back to the
  // flat parameter vector. grads must align with outputs().
  std::vector<double> backward(const std::vector<LocationGradient>& grads) const;

 private:
  struct Impl;
  std::vector<LocationOutput> outputs_;
  std::unique_ptr<Impl> impl_;
};

// Forward pass without retained state.
std::vector<LocationOutput> forward(const MicroHead& head,
                                    const FeatureGrid& features,
                                    const ForwardOptions& opts = {});

}  // namespace detlab
