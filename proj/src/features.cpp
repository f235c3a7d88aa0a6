#include "detlab/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "detlab/errors.hpp"
#include "detlab/rng.hpp"

namespace detlab {

FeatureGrid render_features(const SceneRecord& scene, const GridSpec& grid,
                            int dim, int num_classes) {
  if (!grid.valid()) throw ValidationError("render_features: invalid grid");
  if (num_classes <= 0) throw ValidationError("render_features: num_classes");
  if (dim < num_classes + 5)
    throw ValidationError("render_features: dim must be >= num_classes + 5");
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    if (!scene.objects[o].box.valid())
      throw ValidationError("render_features: degenerate object box");
    if (scene.objects[o].class_id < 0 || scene.objects[o].class_id >= num_classes)
      throw ValidationError("render_features: object class outside universe");
  }
  if (scene.signal.size() != scene.objects.size())
    throw ValidationError("render_features: signal/object count mismatch");

  FeatureGrid fg;
  fg.grid = grid;
  fg.dim = dim;
  fg.levels.resize(grid.levels.size());

  // per-location noise multiplier for the geometry channels, 1 off-object
  std::vector<std::vector<double>> geo_mults(grid.levels.size());

  for (std::size_t l = 0; l < grid.levels.size(); ++l) {
    const auto& lv = grid.levels[l];
    auto& data = fg.levels[l];
    data.assign(static_cast<std::size_t>(lv.height) * lv.width * dim, 0.0);
    auto& geo_mult = geo_mults[l];
    geo_mult.assign(static_cast<std::size_t>(lv.height) * lv.width, 1.0);
    for (int i = 0; i < lv.height; ++i) {
      for (int j = 0; j < lv.width; ++j) {
        const Point p = grid.location(static_cast<int>(l), i, j);
        double* cell = data.data() + static_cast<std::size_t>((i * lv.width + j) * dim);

        // class presence bumps
        for (std::size_t o = 0; o < scene.objects.size(); ++o) {
          const GtObject& obj = scene.objects[o];
          const Point c = obj.box.center();
          const double rx = 2.0 * (p.x - c.x) / obj.box.width();
          const double ry = 2.0 * (p.y - c.y) / obj.box.height();
          const double v = scene.signal[o] * std::exp(-(rx * rx + ry * ry));
          double& slot = cell[obj.class_id];
          slot = std::max(slot, v);
        }

        // offsets of the smallest containing object
        int owner = -1;
        double owner_area = std::numeric_limits<double>::infinity();
        for (std::size_t o = 0; o < scene.objects.size(); ++o) {
          const BBox& b = scene.objects[o].box;
          if (!b.contains(p)) continue;
          const double a = b.area();
          if (a < owner_area) {
            owner_area = a;
            owner = static_cast<int>(o);
          }
        }
        if (owner >= 0) {
          const BBox& ob = scene.objects[static_cast<std::size_t>(owner)].box;
          const DistanceVector d = encode_distances(p, ob);
          cell[num_classes + 0] = std::log1p(d.l) / 4.0;
          cell[num_classes + 1] = std::log1p(d.t) / 4.0;
          cell[num_classes + 2] = std::log1p(d.r) / 4.0;
          cell[num_classes + 3] = std::log1p(d.b) / 4.0;
          cell[num_classes + 4] = 1.0;
          // boundary evidence is crisp at the owner's core and noisy toward
          // the rim, the way real backbone features behave; this is what
          // makes central locations regress better than peripheral ones
          const Point oc = ob.center();
          const double rx = 2.0 * (p.x - oc.x) / ob.width();
          const double ry = 2.0 * (p.y - oc.y) / ob.height();
          geo_mult[static_cast<std::size_t>(i * lv.width + j)] =
              1.0 + kGeoNoiseGain * (rx * rx + ry * ry);
        }
      }
    }
  }

  Rng noise(scene.noise_seed);
  for (std::size_t l = 0; l < fg.levels.size(); ++l) {
    auto& data = fg.levels[l];
    const auto& geo_mult = geo_mults[l];
    for (std::size_t v = 0; v < data.size(); ++v) {
      const int ch = static_cast<int>(v % static_cast<std::size_t>(dim));
      const bool geo = ch >= num_classes && ch < num_classes + 5;
      const double mult = geo ? geo_mult[v / static_cast<std::size_t>(dim)] : 1.0;
      data[v] += scene.noise * mult * noise.normal();
    }
  }
  return fg;
}

BilinearTap make_tap(const GridSpec& grid, int level, Point p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y))
    throw ValidationError("make_tap: non-finite point");
  const auto& lv = grid.levels[static_cast<std::size_t>(level)];
  const double s = static_cast<double>(lv.stride);
  const int w = lv.width;
  const int h = lv.height;

  const double u_raw = p.x / s - 0.5;
  const double v_raw = p.y / s - 0.5;
  const double u = std::clamp(u_raw, 0.0, static_cast<double>(w - 1));
  const double v = std::clamp(v_raw, 0.0, static_cast<double>(h - 1));
  const bool u_interior = u_raw > 0.0 && u_raw < static_cast<double>(w - 1);
  const bool v_interior = v_raw > 0.0 && v_raw < static_cast<double>(h - 1);

  const int u0 = std::min(static_cast<int>(std::floor(u)), std::max(w - 2, 0));
  const int v0 = std::min(static_cast<int>(std::floor(v)), std::max(h - 2, 0));
  const int u1 = std::min(u0 + 1, w - 1);
  const int v1 = std::min(v0 + 1, h - 1);
  const double fu = u - u0;
  const double fv = v - v0;

  BilinearTap tap;
  tap.cell[0] = v0 * w + u0;
  tap.cell[1] = v0 * w + u1;
  tap.cell[2] = v1 * w + u0;
  tap.cell[3] = v1 * w + u1;
  tap.w[0] = (1.0 - fv) * (1.0 - fu);
  tap.w[1] = (1.0 - fv) * fu;
  tap.w[2] = fv * (1.0 - fu);
  tap.w[3] = fv * fu;

  const double dudx = u_interior ? 1.0 / s : 0.0;
  const double dvdy = v_interior ? 1.0 / s : 0.0;
  tap.dwdx[0] = -(1.0 - fv) * dudx;
  tap.dwdx[1] = (1.0 - fv) * dudx;
  tap.dwdx[2] = -fv * dudx;
  tap.dwdx[3] = fv * dudx;
  tap.dwdy[0] = -(1.0 - fu) * dvdy;
  tap.dwdy[1] = -fu * dvdy;
  tap.dwdy[2] = (1.0 - fu) * dvdy;
  tap.dwdy[3] = fu * dvdy;
  return tap;
}

std::vector<double> bilinear_sample(const FeatureGrid& fg, int level, Point p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y))
    throw ValidationError("bilinear_sample: non-finite point");
  const BilinearTap tap = make_tap(fg.grid, level, p);
  const auto& data = fg.levels[static_cast<std::size_t>(level)];
  std::vector<double> out(static_cast<std::size_t>(fg.dim), 0.0);
  for (int k = 0; k < 4; ++k) {
    const double* cell = data.data() + static_cast<std::size_t>(tap.cell[k]) * fg.dim;
    for (int d = 0; d < fg.dim; ++d) out[static_cast<std::size_t>(d)] += tap.w[k] * cell[d];
  }
  return out;
}

std::vector<double> star_aggregate(const FeatureGrid& fg, int level,
                                   const StarPoints& star,
                                   const std::vector<double>& mix) {
  const int dim = fg.dim;
  if (mix.size() != static_cast<std::size_t>(9 * dim * dim))
    throw ValidationError("star_aggregate: mix size must be 9 * dim * dim");
  std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
  for (int j = 0; j < 9; ++j) {
    const std::vector<double> f = bilinear_sample(fg, level, star[static_cast<std::size_t>(j)]);
    const double* block = mix.data() + static_cast<std::size_t>(j) * dim * dim;
    for (int k = 0; k < dim; ++k) {
      double acc = 0.0;
      const double* row = block + static_cast<std::size_t>(k) * dim;
      for (int d = 0; d < dim; ++d) acc += row[d] * f[static_cast<std::size_t>(d)];
      out[static_cast<std::size_t>(k)] += acc;
    }
  }
  return out;
}

}  // namespace detlab
