#pragma once

// Brute-force reference evaluator for the test suite. Mirrors the documented
// scoring protocol with flat loops and no shared code with src/eval.cpp, so
// agreement between the two is meaningful evidence.

#include <algorithm>
#include <limits>
#include <vector>

#include "detlab/eval.hpp"
#include "detlab/geometry.hpp"
#include "detlab/rng.hpp"

namespace naive {

struct Summary {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::vector<double> per_threshold;
};

struct Flagged {
  std::vector<int> tp;  // counted detections only, descending-score order
  int n_gt = 0;
};

inline Flagged flag_class(const std::vector<detlab::DetectionRecord>& capped,
                          const std::vector<detlab::GtRecord>& gts, int cls,
                          double thr, double area_lo, double area_hi) {
  Flagged out;
  std::vector<int> gt_idx;
  std::vector<bool> gt_taken;
  std::vector<bool> gt_ignored;
  for (size_t g = 0; g < gts.size(); ++g) {
    if (gts[g].class_id != cls) continue;
    gt_idx.push_back(static_cast<int>(g));
    gt_taken.push_back(false);
    double a = gts[g].box.area();
    bool ign = !(a >= area_lo && a < area_hi);
    gt_ignored.push_back(ign);
    if (!ign) ++out.n_gt;
  }

  std::vector<std::pair<const detlab::DetectionRecord*, size_t>> dets;
  for (size_t i = 0; i < capped.size(); ++i) {
    if (capped[i].class_id == cls) dets.push_back({&capped[i], i});
  }
  std::sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) {
    if (a.first->score != b.first->score) return a.first->score > b.first->score;
    return a.second < b.second;
  });

  for (const auto& [d, pos] : dets) {
    (void)pos;
    int best = -1;
    double best_ov = 0.0;
    bool best_ign = false;
    // first sweep real gts, then ignored ones
    for (int want_ign = 0; want_ign < 2 && best < 0; ++want_ign) {
      for (size_t g = 0; g < gt_idx.size(); ++g) {
        if (gt_taken[g]) continue;
        if (gt_ignored[g] != (want_ign == 1)) continue;
        if (gts[static_cast<size_t>(gt_idx[g])].image_id != d->image_id) continue;
        double ov = detlab::iou(d->box, gts[static_cast<size_t>(gt_idx[g])].box);
        if (ov < thr) continue;
        if (best < 0 || ov > best_ov) {
          best = static_cast<int>(g);
          best_ov = ov;
          best_ign = want_ign == 1;
        }
      }
    }
    if (best >= 0) {
      gt_taken[static_cast<size_t>(best)] = true;
      if (!best_ign) out.tp.push_back(1);
      // a detection eaten by an ignored gt leaves no trace
    } else {
      double a = d->box.area();
      if (a >= area_lo && a < area_hi) out.tp.push_back(0);
    }
  }
  return out;
}

// 101-point AP computed the slow way: for every recall grid point take the
// best precision among positions that reach it.
inline double ap_101(const std::vector<int>& tp, int n_gt) {
  std::vector<double> recall, precision;
  int hits = 0;
  for (size_t i = 0; i < tp.size(); ++i) {
    hits += tp[i];
    recall.push_back(static_cast<double>(hits) / n_gt);
    precision.push_back(static_cast<double>(hits) / static_cast<double>(i + 1));
  }
  double sum = 0.0;
  for (int j = 0; j <= 100; ++j) {
    double r = j / 100.0;
    double best = 0.0;
    for (size_t i = 0; i < recall.size(); ++i) {
      if (recall[i] >= r) best = std::max(best, precision[i]);
    }
    sum += best;
  }
  return sum / 101.0;
}

inline Summary evaluate(std::vector<detlab::DetectionRecord> dets,
                        const std::vector<detlab::GtRecord>& gts,
                        int num_classes, int max_dets = 100) {
  // cap per image, stable within equal scores
  std::stable_sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) {
    if (a.image_id != b.image_id) return a.image_id < b.image_id;
    return a.score > b.score;
  });
  std::vector<detlab::DetectionRecord> capped;
  for (size_t i = 0; i < dets.size(); ++i) {
    int seen = 0;
    for (size_t j = 0; j < i; ++j)
      if (dets[j].image_id == dets[i].image_id) ++seen;
    if (seen < max_dets) capped.push_back(dets[i]);
  }

  const double inf = std::numeric_limits<double>::infinity();
  Summary out;
  for (int t = 0; t < 10; ++t) {
    double thr = (50 + 5 * t) / 100.0;
    double sum = 0.0;
    int counted = 0;
    for (int cls = 0; cls < num_classes; ++cls) {
      Flagged f = flag_class(capped, gts, cls, thr, 0.0, inf);
      if (f.n_gt == 0 && f.tp.empty()) continue;  // class absent everywhere
      double ap = (f.n_gt == 0) ? 0.0 : ap_101(f.tp, f.n_gt);
      sum += ap;
      ++counted;
    }
    out.per_threshold.push_back(counted > 0 ? sum / counted : 0.0);
  }
  for (double v : out.per_threshold) out.ap += v;
  out.ap /= 10.0;
  out.ap50 = out.per_threshold[0];
  out.ap75 = out.per_threshold[5];
  return out;
}

struct RandomInstance {
  std::vector<detlab::DetectionRecord> dets;
  std::vector<detlab::GtRecord> gts;
};

// A small detection scene: a handful of objects, detections that are jittered
// copies, duplicates, and pure noise.
inline RandomInstance random_instance(detlab::Rng& rng, int num_images,
                                      int num_classes, int max_gts,
                                      int max_dets) {
  RandomInstance inst;
  for (int img = 0; img < num_images; ++img) {
    int n_gt = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_gts) + 1));
    std::vector<detlab::GtRecord> local;
    for (int g = 0; g < n_gt; ++g) {
      double cx = rng.uniform(10, 90), cy = rng.uniform(10, 90);
      double w = rng.uniform(4, 40), h = rng.uniform(4, 40);
      detlab::GtRecord r;
      r.image_id = img;
      r.box = {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
      r.class_id = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_classes)));
      local.push_back(r);
      inst.gts.push_back(r);
    }
    int n_det = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_dets) + 1));
    for (int d = 0; d < n_det; ++d) {
      detlab::DetectionRecord r;
      r.image_id = img;
      r.score = rng.uniform(0.05, 1.0);
      if (!local.empty() && rng.uniform() < 0.7) {
        const detlab::GtRecord& src = local[rng.uniform_index(local.size())];
        double jx = rng.uniform(-6, 6), jy = rng.uniform(-6, 6);
        double jw = rng.uniform(0.7, 1.3);
        double w = src.box.width() * jw, h = src.box.height() * jw;
        detlab::Point c = src.box.center();
        r.box = {c.x + jx - w / 2, c.y + jy - h / 2, c.x + jx + w / 2,
                 c.y + jy + h / 2};
        r.class_id = rng.uniform() < 0.85
                         ? src.class_id
                         : static_cast<int>(rng.uniform_index(
                               static_cast<std::uint64_t>(num_classes)));
      } else {
        double cx = rng.uniform(0, 100), cy = rng.uniform(0, 100);
        double w = rng.uniform(3, 30), h = rng.uniform(3, 30);
        r.box = {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
        r.class_id = static_cast<int>(
            rng.uniform_index(static_cast<std::uint64_t>(num_classes)));
      }
      inst.dets.push_back(r);
    }
  }
  return inst;
}

}  // namespace naive
