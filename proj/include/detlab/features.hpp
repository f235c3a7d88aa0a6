#pragma once

#include <vector>

#include "detlab/assigner.hpp"
#include "detlab/geometry.hpp"
#include "detlab/scene.hpp"

namespace detlab {

// Dense per-level feature field aligned to a GridSpec. Storage per level is
// row-major cells with dim contiguous channels: data[(i * W + j) * dim + d].
struct FeatureGrid {
  GridSpec grid;
  int dim = 0;
  std::vector<std::vector<double>> levels;

  const double* cell(int level, int i, int j) const {
    const int w = grid.levels[static_cast<std::size_t>(level)].width;
    return levels[static_cast<std::size_t>(level)].data() +
           static_cast<std::size_t>((i * w + j) * dim);
  }
};

// Noise on the geometry channels grows quadratically toward the owner's
// rim: sigma = noise * (1 + kGeoNoiseGain * (rx^2 + ry^2)). Central
// locations see crisp boundary evidence and regress well; peripheral ones
// see mush, which is what gives centerness its ranking value.
inline constexpr double kGeoNoiseGain = 8.0;

// Channel layout produced by render_features, for C = spec num_classes:
//   [0, C)      per-class presence: max over objects of that class of
//               signal * exp(-(rx^2 + ry^2)), rx = 2(px - cx)/w etc.
//   [C, C+4)    log1p(l,t,r,b)/4 for the smallest-area object containing
//               the location, 0 outside every object
//   [C+4]       containment indicator (inside any object)
//   [C+5, dim)  zeros
// plus N(0, noise^2) noise per channel, seeded by scene.noise_seed; on the
// geometry channels [C, C+5) sigma is scaled by the owner-relative factor
// above.
FeatureGrid render_features(const SceneRecord& scene, const GridSpec& grid,
                            int dim, int num_classes);

// Bilinear interpolation stencil at an image-space point: the four corner
// cells, their weights, and the weight derivatives w.r.t. the point.
struct BilinearTap {
  int cell[4] = {0, 0, 0, 0};  // flat (i * W + j) indices
  double w[4] = {0, 0, 0, 0};
  double dwdx[4] = {0, 0, 0, 0};
  double dwdy[4] = {0, 0, 0, 0};
};

BilinearTap make_tap(const GridSpec& grid, int level, Point p);

// Feature vector at an arbitrary image point (border-clamped).
std::vector<double> bilinear_sample(const FeatureGrid& fg, int level, Point p);

// Sum over the nine star samples of (mix block j) * (feature at star[j]).
// mix holds nine dim x dim row-major blocks, output k = sum_j sum_d
// mix[j][k][d] * f_j[d].
std::vector<double> star_aggregate(const FeatureGrid& fg, int level,
                                   const StarPoints& star,
                                   const std::vector<double>& mix);

}  // namespace detlab
