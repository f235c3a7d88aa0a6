#include "detlab/head.hpp"

#include <cmath>

#include "detlab/errors.hpp"

namespace detlab {

ParamLayout param_layout(const HeadConfig& cfg) {
  const int d = cfg.feature_dim;
  const int c = cfg.num_classes;
  ParamLayout lay;
  lay.w_init = 0;
  lay.b_init = lay.w_init + 4 * d;
  lay.mix = lay.b_init + 4;
  lay.w_ref = lay.mix + 9 * d * d;
  lay.b_ref = lay.w_ref + 4 * d;
  lay.w_cls = lay.b_ref + 4;
  lay.b_cls = lay.w_cls + c * d;
  lay.total = lay.b_cls + c;
  return lay;
}

MicroHead init_head(const HeadConfig& cfg, std::uint64_t seed) {
  if (cfg.feature_dim <= 0 || cfg.num_classes <= 0)
    throw ValidationError("init_head: invalid head config");
  if (!std::isfinite(cfg.init_dist) || cfg.init_dist <= 0.0)
    throw ValidationError("init_head: init_dist must be positive");
  const ParamLayout lay = param_layout(cfg);
  MicroHead head;
  head.cfg = cfg;
  head.params.resize(static_cast<std::size_t>(lay.total));
  Rng rng(seed);
  for (double& p : head.params) p = rng.uniform(-0.1, 0.1);
  const double dist_bias = std::log(cfg.init_dist);
  for (int r = 0; r < 4; ++r)
    head.params[static_cast<std::size_t>(lay.b_init + r)] = dist_bias;
  const double bias = std::log(0.01 / 0.99);
  for (int c = 0; c < cfg.num_classes; ++c)
    head.params[static_cast<std::size_t>(lay.b_cls + c)] = bias;
  return head;
}

namespace {

// star_points order: center, left, top, right, bottom, tl, tr, bl, br.
// Which distance component each point's coordinate rides on, and with what
// sign (x = px - l or px + r, y = py - t or py + b).
constexpr int kStarXDep[9] = {-1, 0, -1, 2, -1, 0, 2, 0, 2};
constexpr double kStarXSign[9] = {0, -1, 0, 1, 0, -1, 1, -1, 1};
constexpr int kStarYDep[9] = {-1, -1, 1, -1, 3, 1, 1, 3, 3};
constexpr double kStarYSign[9] = {0, 0, -1, 0, 1, -1, -1, 1, 1};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

struct HeadForward::Impl {
  const MicroHead* head = nullptr;
  const FeatureGrid* features = nullptr;
  ForwardOptions opts;
  ParamLayout lay;

  struct LocCache {
    int level = 0;
    std::vector<double> f0;      // D
    BilinearTap star_taps[9];
    std::vector<double> f_star;  // 9 * D
    std::vector<double> g;       // D
  };
  std::vector<LocCache> caches;
};

HeadForward::HeadForward(const MicroHead& head, const FeatureGrid& features,
                         const ForwardOptions& opts)
    : impl_(std::make_unique<Impl>()) {
  const int d = head.cfg.feature_dim;
  const int nc = head.cfg.num_classes;
  const ParamLayout lay = param_layout(head.cfg);
  if (static_cast<int>(head.params.size()) != lay.total)
    throw ValidationError("forward: parameter vector size mismatch");
  if (features.dim != d)
    throw ValidationError("forward: feature dim does not match head config");
  if (!features.grid.valid()) throw ValidationError("forward: invalid grid");

  impl_->head = &head;
  impl_->features = &features;
  impl_->opts = opts;
  impl_->lay = lay;

  const double* P = head.params.data();
  const GridSpec& grid = features.grid;
  outputs_.reserve(static_cast<std::size_t>(grid.num_locations()));
  impl_->caches.reserve(outputs_.capacity());

  for (std::size_t l = 0; l < grid.levels.size(); ++l) {
    const auto& lv = grid.levels[l];
    const auto& data = features.levels[l];
    for (int i = 0; i < lv.height; ++i) {
      for (int j = 0; j < lv.width; ++j) {
        Impl::LocCache cache;
        cache.level = static_cast<int>(l);
        LocationOutput out;
        out.level = static_cast<int>(l);
        out.anchor = grid.location(static_cast<int>(l), i, j);

        cache.f0.assign(static_cast<std::size_t>(d), 0.0);
        {
          const BilinearTap tap = make_tap(grid, static_cast<int>(l), out.anchor);
          for (int k = 0; k < 4; ++k) {
            const double* cell = data.data() + static_cast<std::size_t>(tap.cell[k]) * d;
            for (int dd = 0; dd < d; ++dd)
              cache.f0[static_cast<std::size_t>(dd)] += tap.w[k] * cell[dd];
          }
        }

        double dist[4];
        for (int r = 0; r < 4; ++r) {
          double z = P[lay.b_init + r];
          const double* row = P + lay.w_init + r * d;
          for (int dd = 0; dd < d; ++dd) z += row[dd] * cache.f0[static_cast<std::size_t>(dd)];
          dist[r] = std::exp(z);
        }
        out.initial = DistanceVector{dist[0], dist[1], dist[2], dist[3]};
        out.initial_box = decode_distances(out.anchor, out.initial);
        // exp overflow or NaN parameters land here; stop before the star
        // points feed garbage indices into the taps
        if (!out.initial_box.valid())
          throw DivergenceError("head forward: non-finite initial box");

        const StarPoints star = star_points(out.anchor, out.initial);
        cache.f_star.assign(static_cast<std::size_t>(9 * d), 0.0);
        std::vector<double> a(static_cast<std::size_t>(d), 0.0);
        for (int sp = 0; sp < 9; ++sp) {
          cache.star_taps[sp] =
              make_tap(grid, static_cast<int>(l), star[static_cast<std::size_t>(sp)]);
          const BilinearTap& tap = cache.star_taps[sp];
          double* fj = cache.f_star.data() + static_cast<std::size_t>(sp) * d;
          for (int k = 0; k < 4; ++k) {
            const double* cell = data.data() + static_cast<std::size_t>(tap.cell[k]) * d;
            for (int dd = 0; dd < d; ++dd) fj[dd] += tap.w[k] * cell[dd];
          }
          const double* block = P + lay.mix + sp * d * d;
          for (int k = 0; k < d; ++k) {
            double acc = 0.0;
            const double* row = block + k * d;
            for (int dd = 0; dd < d; ++dd) acc += row[dd] * fj[dd];
            a[static_cast<std::size_t>(k)] += acc;
          }
        }
        cache.g.assign(static_cast<std::size_t>(d), 0.0);
        for (int k = 0; k < d; ++k) cache.g[static_cast<std::size_t>(k)] = std::tanh(a[static_cast<std::size_t>(k)]);

        double scales[4] = {1.0, 1.0, 1.0, 1.0};
        if (!opts.freeze_scales) {
          for (int r = 0; r < 4; ++r) {
            double z = P[lay.b_ref + r];
            const double* row = P + lay.w_ref + r * d;
            for (int k = 0; k < d; ++k) z += row[k] * cache.g[static_cast<std::size_t>(k)];
            scales[r] = std::exp(z);
          }
        }
        out.scales = RefineScales{scales[0], scales[1], scales[2], scales[3]};
        out.refined = refine(out.initial, out.scales);
        out.refined_box = decode_distances(out.anchor, out.refined);
        if (!out.refined_box.valid())
          throw DivergenceError("head forward: non-finite refined box");
        // auxiliary ranking score: the refined regression is trained toward
        // the gt distances, so its centerness is a roughly unbiased noisy
        // estimate of the true centerness, playing the part of a predicted
        // centerness branch
        out.ctr = centerness(out.refined);

        out.scores.resize(static_cast<std::size_t>(nc));
        for (int c = 0; c < nc; ++c) {
          double z = P[lay.b_cls + c];
          const double* row = P + lay.w_cls + c * d;
          for (int k = 0; k < d; ++k) z += row[k] * cache.g[static_cast<std::size_t>(k)];
          out.scores[static_cast<std::size_t>(c)] = sigmoid(z);
        }

        outputs_.push_back(std::move(out));
        impl_->caches.push_back(std::move(cache));
      }
    }
  }
}

HeadForward::~HeadForward() = default;
HeadForward::HeadForward(HeadForward&&) noexcept = default;
HeadForward& HeadForward::operator=(HeadForward&&) noexcept = default;

std::vector<double> HeadForward::backward(
    const std::vector<LocationGradient>& grads) const {
  const MicroHead& head = *impl_->head;
  const FeatureGrid& features = *impl_->features;
  const ParamLayout& lay = impl_->lay;
  const int d = head.cfg.feature_dim;
  const int nc = head.cfg.num_classes;
  if (grads.size() != outputs_.size())
    throw ValidationError("backward: gradient/location count mismatch");

  const double* P = head.params.data();
  std::vector<double> G(static_cast<std::size_t>(lay.total), 0.0);
  std::vector<double> dg(static_cast<std::size_t>(d));
  std::vector<double> da(static_cast<std::size_t>(d));
  std::vector<double> dfj(static_cast<std::size_t>(d));

  for (std::size_t loc = 0; loc < outputs_.size(); ++loc) {
    const LocationOutput& out = outputs_[loc];
    const Impl::LocCache& cache = impl_->caches[loc];
    const LocationGradient& lg = grads[loc];
    if (static_cast<int>(lg.dscores.size()) != nc)
      throw ValidationError("backward: score gradient size mismatch");
    const auto& data = features.levels[static_cast<std::size_t>(cache.level)];

    std::fill(dg.begin(), dg.end(), 0.0);

    // classification branch
    for (int c = 0; c < nc; ++c) {
      const double p = out.scores[static_cast<std::size_t>(c)];
      const double dz = lg.dscores[static_cast<std::size_t>(c)] * p * (1.0 - p);
      if (dz == 0.0) continue;
      G[static_cast<std::size_t>(lay.b_cls + c)] += dz;
      const double* row = P + lay.w_cls + c * d;
      double* grow = G.data() + lay.w_cls + c * d;
      for (int k = 0; k < d; ++k) {
        grow[k] += dz * cache.g[static_cast<std::size_t>(k)];
        dg[static_cast<std::size_t>(k)] += dz * row[k];
      }
    }

    // box corner gradients to distance space
    const double dref[4] = {-lg.drefined[0], -lg.drefined[1], lg.drefined[2],
                            lg.drefined[3]};
    double dinit[4] = {-lg.dinitial[0], -lg.dinitial[1], lg.dinitial[2],
                       lg.dinitial[3]};

    const double init[4] = {out.initial.l, out.initial.t, out.initial.r,
                            out.initial.b};
    const double sc[4] = {out.scales.dl, out.scales.dt, out.scales.dr,
                          out.scales.db};
    if (impl_->opts.freeze_scales) {
      for (int r = 0; r < 4; ++r) dinit[r] += dref[r];
    } else {
      for (int r = 0; r < 4; ++r) {
        dinit[r] += dref[r] * sc[r];
        const double dz = dref[r] * init[r] * sc[r];  // through exp
        if (dz == 0.0) continue;
        G[static_cast<std::size_t>(lay.b_ref + r)] += dz;
        const double* row = P + lay.w_ref + r * d;
        double* grow = G.data() + lay.w_ref + r * d;
        for (int k = 0; k < d; ++k) {
          grow[k] += dz * cache.g[static_cast<std::size_t>(k)];
          dg[static_cast<std::size_t>(k)] += dz * row[k];
        }
      }
    }

    // through tanh and the star aggregation
    bool any_da = false;
    for (int k = 0; k < d; ++k) {
      const double gk = cache.g[static_cast<std::size_t>(k)];
      da[static_cast<std::size_t>(k)] = dg[static_cast<std::size_t>(k)] * (1.0 - gk * gk);
      if (da[static_cast<std::size_t>(k)] != 0.0) any_da = true;
    }

    if (any_da) {
      for (int sp = 0; sp < 9; ++sp) {
        const double* fj = cache.f_star.data() + static_cast<std::size_t>(sp) * d;
        const double* block = P + lay.mix + sp * d * d;
        double* gblock = G.data() + lay.mix + sp * d * d;
        std::fill(dfj.begin(), dfj.end(), 0.0);
        for (int k = 0; k < d; ++k) {
          const double dak = da[static_cast<std::size_t>(k)];
          if (dak == 0.0) continue;
          const double* row = block + k * d;
          double* grow = gblock + k * d;
          for (int dd = 0; dd < d; ++dd) {
            grow[dd] += dak * fj[dd];
            dfj[static_cast<std::size_t>(dd)] += dak * row[dd];
          }
        }

        const int xdep = kStarXDep[sp];
        const int ydep = kStarYDep[sp];
        if (xdep < 0 && ydep < 0) continue;
        const BilinearTap& tap = cache.star_taps[sp];
        double dldx = 0.0;
        double dldy = 0.0;
        for (int k = 0; k < 4; ++k) {
          if (tap.dwdx[k] == 0.0 && tap.dwdy[k] == 0.0) continue;
          const double* cell = data.data() + static_cast<std::size_t>(tap.cell[k]) * d;
          double dot = 0.0;
          for (int dd = 0; dd < d; ++dd) dot += dfj[static_cast<std::size_t>(dd)] * cell[dd];
          dldx += tap.dwdx[k] * dot;
          dldy += tap.dwdy[k] * dot;
        }
        if (xdep >= 0) dinit[xdep] += kStarXSign[sp] * dldx;
        if (ydep >= 0) dinit[ydep] += kStarYSign[sp] * dldy;
      }
    }

    // initial-distance branch
    for (int r = 0; r < 4; ++r) {
      const double dz = dinit[r] * init[r];  // through exp
      if (dz == 0.0) continue;
      G[static_cast<std::size_t>(lay.b_init + r)] += dz;
      double* grow = G.data() + lay.w_init + r * d;
      for (int dd = 0; dd < d; ++dd)
        grow[dd] += dz * cache.f0[static_cast<std::size_t>(dd)];
    }
  }
  return G;
}

std::vector<LocationOutput> forward(const MicroHead& head,
                                    const FeatureGrid& features,
                                    const ForwardOptions& opts) {
  return HeadForward(head, features, opts).outputs();
}

}  // namespace detlab
