#include "detlab/assigner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "detlab/errors.hpp"

namespace detlab {

bool GridSpec::valid() const {
  if (levels.empty()) return false;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& l = levels[i];
    if (l.stride <= 0 || l.height <= 0 || l.width <= 0) return false;
    if (i > 0 && l.stride <= levels[i - 1].stride) return false;
  }
  return true;
}

namespace {

struct Candidate {
  int location = -1;  // flat index
  double iou = 0.0;
};

double center_distance2(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

}  // namespace

Assignment atss_assign(const GridSpec& grid, const std::vector<GtObject>& gts,
                       int k) {
  if (!grid.valid()) throw ValidationError("atss_assign: invalid grid");
  if (k <= 0) throw ValidationError("atss_assign: k must be positive");
  for (const auto& gt : gts) {
    if (!gt.box.valid() || gt.box.width() <= 0.0 || gt.box.height() <= 0.0)
      throw ValidationError("atss_assign: degenerate gt box");
    if (gt.class_id < 0) throw ValidationError("atss_assign: negative class id");
  }

  const int n_loc = grid.num_locations();
  Assignment out;
  out.per_location.assign(static_cast<std::size_t>(n_loc), std::nullopt);
  if (gts.empty()) return out;

  // Flat location centers and per-location stride, precomputed once.
  std::vector<Point> centers(static_cast<std::size_t>(n_loc));
  std::vector<int> strides(static_cast<std::size_t>(n_loc));
  {
    int flat = 0;
    for (std::size_t l = 0; l < grid.levels.size(); ++l) {
      const auto& lv = grid.levels[l];
      for (int i = 0; i < lv.height; ++i) {
        for (int j = 0; j < lv.width; ++j) {
          centers[static_cast<std::size_t>(flat)] =
              grid.location(static_cast<int>(l), i, j);
          strides[static_cast<std::size_t>(flat)] = lv.stride;
          ++flat;
        }
      }
    }
  }

  // best claim per location: iou then lower gt index
  std::vector<double> best_iou(static_cast<std::size_t>(n_loc), -1.0);

  for (std::size_t g = 0; g < gts.size(); ++g) {
    const GtObject& gt = gts[g];
    const Point gc = gt.box.center();

    // k closest per level by center distance
    std::vector<Candidate> candidates;
    for (std::size_t l = 0; l < grid.levels.size(); ++l) {
      const int off = grid.level_offset(static_cast<int>(l));
      const int sz = grid.level_size(static_cast<int>(l));
      std::vector<int> idx(static_cast<std::size_t>(sz));
      for (int t = 0; t < sz; ++t) idx[static_cast<std::size_t>(t)] = off + t;
      const int take = std::min(k, sz);
      std::partial_sort(idx.begin(), idx.begin() + take, idx.end(),
                        [&](int a, int b) {
                          const double da = center_distance2(
                              centers[static_cast<std::size_t>(a)], gc);
                          const double db = center_distance2(
                              centers[static_cast<std::size_t>(b)], gc);
                          if (da != db) return da < db;
                          return a < b;
                        });
      for (int t = 0; t < take; ++t) {
        Candidate c;
        c.location = idx[static_cast<std::size_t>(t)];
        const Point& p = centers[static_cast<std::size_t>(c.location)];
        const double half =
            4.0 * strides[static_cast<std::size_t>(c.location)];
        const BBox virt{p.x - half, p.y - half, p.x + half, p.y + half};
        c.iou = iou(virt, gt.box);
        candidates.push_back(c);
      }
    }
    if (candidates.empty()) continue;

    double mean = 0.0;
    for (const auto& c : candidates) mean += c.iou;
    mean /= static_cast<double>(candidates.size());
    double var = 0.0;
    for (const auto& c : candidates) {
      const double d = c.iou - mean;
      var += d * d;
    }
    var /= static_cast<double>(candidates.size());
    const double threshold = mean + std::sqrt(var);

    for (const auto& c : candidates) {
      if (c.iou < threshold) continue;
      const Point& p = centers[static_cast<std::size_t>(c.location)];
      if (!gt.box.contains(p)) continue;
      auto& slot = out.per_location[static_cast<std::size_t>(c.location)];
      double& slot_iou = best_iou[static_cast<std::size_t>(c.location)];
      const bool claim =
          !slot.has_value() || c.iou > slot_iou ||
          (c.iou == slot_iou && static_cast<int>(g) < slot->gt_index);
      if (claim) {
        slot = Assignment::Foreground{static_cast<int>(g), gt.class_id};
        slot_iou = c.iou;
      }
    }
  }
  return out;
}

std::vector<LocationTarget> build_targets(const Assignment& assignment,
                                          const std::vector<BBox>& predicted_boxes,
                                          const std::vector<GtObject>& gts,
                                          int num_classes) {
  if (num_classes <= 0) throw ValidationError("build_targets: num_classes");
  if (assignment.per_location.size() != predicted_boxes.size())
    throw ValidationError("build_targets: location/box count mismatch");

  std::vector<LocationTarget> targets(assignment.per_location.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    LocationTarget& t = targets[i];
    t.q.assign(static_cast<std::size_t>(num_classes), 0.0);
    const auto& fg = assignment.per_location[i];
    if (!fg.has_value()) continue;
    if (fg->gt_index < 0 || fg->gt_index >= static_cast<int>(gts.size()))
      throw ValidationError("build_targets: gt index out of range");
    if (fg->class_id < 0 || fg->class_id >= num_classes)
      throw ValidationError("build_targets: class id out of range");
    const GtObject& gt = gts[static_cast<std::size_t>(fg->gt_index)];
    const double q = iou(predicted_boxes[i], gt.box);
    t.q[static_cast<std::size_t>(fg->class_id)] = q;
    t.q_weight = q;
    t.label = fg->class_id;
    t.gt = gt.box;
  }
  return targets;
}

}  // namespace detlab
