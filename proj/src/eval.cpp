#include "detlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "detlab/errors.hpp"

namespace detlab {

std::vector<double> coco_thresholds() {
  std::vector<double> t(10);
  for (int i = 0; i < 10; ++i) t[static_cast<std::size_t>(i)] = (50 + 5 * i) / 100.0;
  return t;
}

std::vector<char> match_greedy(const std::vector<BBox>& dets,
                               const std::vector<BBox>& gts, double iou_thr) {
  std::vector<char> tp(dets.size(), 0);
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double ov = iou(dets[d], gts[g]);
      if (ov < iou_thr) continue;
      if (best < 0 || ov > best_iou) {
        best = static_cast<int>(g);
        best_iou = ov;
      }
    }
    if (best >= 0) {
      tp[d] = 1;
      taken[static_cast<std::size_t>(best)] = 1;
    }
  }
  return tp;
}

std::optional<double> average_precision(const std::vector<char>& tp_flags,
                                        int n_gt) {
  if (n_gt < 0) throw ValidationError("average_precision: negative gt count");
  if (n_gt == 0) {
    if (tp_flags.empty()) return std::nullopt;
    return 0.0;
  }
  const std::size_t n = tp_flags.size();
  if (n == 0) return 0.0;

  std::vector<double> recall(n), precision(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += tp_flags[i] ? 1 : 0;
    recall[i] = static_cast<double>(tp) / static_cast<double>(n_gt);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // precision envelope: running max from the right
  for (std::size_t i = n - 1; i-- > 0;) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }

  double sum = 0.0;
  for (int j = 0; j <= 100; ++j) {
    const double r = j / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) {
      sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
  }
  return sum / 101.0;
}

namespace {

struct DetRef {
  const DetectionRecord* d = nullptr;
  std::size_t order = 0;  // position in the capped stream, for tie-breaks
};

struct GtRef {
  const GtRecord* g = nullptr;
  bool ignored = false;
  bool taken = false;
};

struct ClassPool {
  std::vector<DetRef> dets;                 // sorted by descending score
  std::map<int, std::vector<const GtRecord*>> gts_by_image;
  int n_gt = 0;
};

struct MatchResult {
  std::vector<char> tp;  // one flag per counted (non-ignored) detection
  int n_gt = 0;
};

// One (class, threshold) evaluation over pooled detections. Ground truths
// with area outside [area_lo, area_hi) are ignored; detections matching only
// ignored gts, or unmatched with out-of-range area, are dropped from the
// TP/FP stream instead of counting as false positives.
MatchResult evaluate_pool(const ClassPool& pool, double thr, double area_lo,
                          double area_hi) {
  std::map<int, std::vector<GtRef>> state;
  MatchResult res;
  for (const auto& [img, gts] : pool.gts_by_image) {
    auto& refs = state[img];
    refs.reserve(gts.size());
    for (const GtRecord* g : gts) {
      GtRef r;
      r.g = g;
      const double a = g->box.area();
      r.ignored = !(a >= area_lo && a < area_hi);
      refs.push_back(r);
      if (!r.ignored) ++res.n_gt;
    }
  }

  for (const DetRef& dr : pool.dets) {
    auto it = state.find(dr.d->image_id);
    int best = -1;
    double best_iou = 0.0;
    bool best_ignored = false;
    if (it != state.end()) {
      auto& refs = it->second;
      // prefer non-ignored matches; fall back to ignored ones
      for (int pass = 0; pass < 2 && best < 0; ++pass) {
        const bool want_ignored = pass == 1;
        for (std::size_t g = 0; g < refs.size(); ++g) {
          if (refs[g].taken || refs[g].ignored != want_ignored) continue;
          const double ov = iou(dr.d->box, refs[g].g->box);
          if (ov < thr) continue;
          if (best < 0 || ov > best_iou) {
            best = static_cast<int>(g);
            best_iou = ov;
            best_ignored = want_ignored;
          }
        }
      }
      if (best >= 0) refs[static_cast<std::size_t>(best)].taken = true;
    }
    if (best >= 0 && !best_ignored) {
      res.tp.push_back(1);
    } else if (best < 0) {
      const double a = dr.d->box.area();
      if (a >= area_lo && a < area_hi) res.tp.push_back(0);
    }
    // matched-to-ignored detections vanish from the stream
  }
  return res;
}

double mean_ap_over_classes(const std::vector<ClassPool>& pools, double thr,
                            double area_lo, double area_hi) {
  double sum = 0.0;
  int counted = 0;
  for (const auto& pool : pools) {
    const MatchResult m = evaluate_pool(pool, thr, area_lo, area_hi);
    const auto ap = average_precision(m.tp, m.n_gt);
    if (ap.has_value()) {
      sum += *ap;
      ++counted;
    }
  }
  return counted > 0 ? sum / counted : 0.0;
}

}  // namespace

EvalSummary coco_ap(std::vector<DetectionRecord> dets,
                    const std::vector<GtRecord>& gts, int num_classes,
                    const EvalOptions& opts) {
  if (num_classes <= 0) throw ValidationError("coco_ap: num_classes");
  for (const auto& d : dets) {
    if (d.class_id < 0 || d.class_id >= num_classes)
      throw ValidationError("coco_ap: detection class outside universe");
    if (!std::isfinite(d.score)) throw ValidationError("coco_ap: non-finite score");
  }
  for (const auto& g : gts) {
    if (g.class_id < 0 || g.class_id >= num_classes)
      throw ValidationError("coco_ap: gt class outside universe");
    if (!g.box.valid()) throw ValidationError("coco_ap: degenerate gt box");
  }

  // cap detections per image, keeping the input order among equal scores
  std::stable_sort(dets.begin(), dets.end(),
                   [](const DetectionRecord& a, const DetectionRecord& b) {
                     if (a.image_id != b.image_id) return a.image_id < b.image_id;
                     return a.score > b.score;
                   });
  std::vector<DetectionRecord> capped;
  capped.reserve(dets.size());
  {
    int cur_image = 0;
    int count = 0;
    bool first = true;
    for (const auto& d : dets) {
      if (first || d.image_id != cur_image) {
        cur_image = d.image_id;
        count = 0;
        first = false;
      }
      if (count < opts.max_dets_per_image) {
        capped.push_back(d);
        ++count;
      }
    }
  }

  // pool per class
  std::vector<ClassPool> pools(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < capped.size(); ++i) {
    auto& pool = pools[static_cast<std::size_t>(capped[i].class_id)];
    pool.dets.push_back({&capped[i], i});
  }
  for (auto& pool : pools) {
    std::sort(pool.dets.begin(), pool.dets.end(),
              [](const DetRef& a, const DetRef& b) {
                if (a.d->score != b.d->score) return a.d->score > b.d->score;
                return a.order < b.order;
              });
  }
  for (const auto& g : gts) {
    auto& pool = pools[static_cast<std::size_t>(g.class_id)];
    pool.gts_by_image[g.image_id].push_back(&g);
    ++pool.n_gt;
  }

  const double inf = std::numeric_limits<double>::infinity();
  EvalSummary out;
  out.per_threshold.reserve(10);
  for (double thr : coco_thresholds()) {
    out.per_threshold.push_back(mean_ap_over_classes(pools, thr, 0.0, inf));
  }
  double total = 0.0;
  for (double v : out.per_threshold) total += v;
  out.ap = total / static_cast<double>(out.per_threshold.size());
  out.ap50 = out.per_threshold[0];
  out.ap75 = out.per_threshold[5];

  if (opts.size_buckets) {
    const double s2 = 32.0 * 32.0;
    const double m2 = 96.0 * 96.0;
    const double lo[3] = {0.0, s2, m2};
    const double hi[3] = {s2, m2, inf};
    double bucket[3];
    for (int b = 0; b < 3; ++b) {
      double sum = 0.0;
      for (double thr : coco_thresholds()) {
        sum += mean_ap_over_classes(pools, thr, lo[b], hi[b]);
      }
      bucket[b] = sum / 10.0;
    }
    out.ap_small = bucket[0];
    out.ap_medium = bucket[1];
    out.ap_large = bucket[2];
  }
  return out;
}

}  // namespace detlab
