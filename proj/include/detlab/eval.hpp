#pragma once

#include <optional>
#include <vector>

#include "detlab/geometry.hpp"

namespace detlab {

struct DetectionRecord {
  int image_id = 0;
  BBox box;
  int class_id = 0;
  double score = 0.0;
};

struct GtRecord {
  int image_id = 0;
  BBox box;
  int class_id = 0;
};

struct EvalSummary {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::vector<double> per_threshold;  // 0.50:0.05:0.95
  std::optional<double> ap_small;
  std::optional<double> ap_medium;
  std::optional<double> ap_large;
};

// The ten COCO IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> coco_thresholds();

// Greedy matching for one (image, class) pool. dets must already be sorted
// by descending score; each detection takes the highest-IoU unmatched gt
// with IoU >= iou_thr. Returns one flag per detection (1 = true positive).
std::vector<char> match_greedy(const std::vector<BBox>& dets,
                               const std::vector<BBox>& gts, double iou_thr);

// 101-point interpolated AP from TP flags in descending-score order.
// n_gt = 0 with detections present scores 0; n_gt = 0 with no detections is
// excluded from averaging (nullopt).
std::optional<double> average_precision(const std::vector<char>& tp_flags,
                                        int n_gt);

struct EvalOptions {
  int max_dets_per_image = 100;
  bool size_buckets = false;  // 32^2 and 96^2 area splits
};

// COCO-style AP: per (class, threshold) pooled greedy matching across
// images, 101-point AP, averaged over classes then thresholds.
EvalSummary coco_ap(std::vector<DetectionRecord> dets,
                    const std::vector<GtRecord>& gts, int num_classes,
                    const EvalOptions& opts = {});

}  // namespace detlab
