#pragma once

#include <optional>
#include <vector>

#include "detlab/assigner.hpp"
#include "detlab/geometry.hpp"

namespace detlab {

// One dense-head output kept for ranking. scores is the per-class vector,
// ctr an optional auxiliary centerness/IoU estimate, source_index a unique
// id within the image (used for deterministic tie-breaks).
struct Candidate {
  BBox box;
  std::vector<double> scores;
  int level = 0;
  std::optional<double> ctr;
  int source_index = 0;
};

enum class RankMode { kCls, kClsTimesCtr, kIacs };

enum class OracleMode { kNone, kGtCtr, kGtCtrIou, kGtBbox, kGtCls, kGtClsIou };

// Foreground association for the oracle study: which gt a candidate belongs
// to and the anchor point its distances were decoded from.
struct OracleAssoc {
  int gt_index = -1;
  Point anchor;
};

// CLS and IACS return scores unchanged (for IACS the vector already carries
// the joint quality signal); CLS_TIMES_CTR scales elementwise by ctr.
std::vector<double> compose_score(const Candidate& c, RankMode mode);

// Replaces predicted quantities of foreground candidates with ground-truth
// values before NMS. Background candidates (no assoc) pass through.
std::vector<Candidate> apply_oracle(
    const std::vector<Candidate>& cands, const std::vector<GtObject>& gts,
    const std::vector<std::optional<OracleAssoc>>& assoc, OracleMode mode);

struct ScoredBox {
  BBox box;
  double score = 0.0;
  int source_index = 0;
};

// Greedy NMS: repeatedly keep the best remaining candidate and drop the rest
// with IoU strictly above iou_thr. Output sorted by descending score, ties
// by lower source_index.
std::vector<ScoredBox> nms(std::vector<ScoredBox> cands, double iou_thr);

enum class SoftNmsMethod { kLinear, kGaussian };

// Iterative rescoring instead of hard suppression. LINEAR multiplies by
// (1 - IoU) when IoU > iou_thr; GAUSSIAN by exp(-IoU^2 / sigma). Candidates
// under score_floor are dropped.
std::vector<ScoredBox> soft_nms(std::vector<ScoredBox> cands,
                                SoftNmsMethod method, double iou_thr,
                                double sigma, double score_floor);

struct Detection {
  BBox box;
  int class_id = 0;
  double score = 0.0;
};

struct InferenceFilterConfig {
  double score_floor = 0.05;
  int topk_per_level = 1000;
  double nms_thr = 0.6;
  RankMode mode = RankMode::kIacs;
};

// Full inference pipeline: compose ranking scores, drop candidates whose max
// class score is at or below the floor, keep top-k per level by max score,
// expand per class and run class-wise NMS.
std::vector<Detection> inference_filter(const std::vector<Candidate>& cands,
                                        const InferenceFilterConfig& cfg);

}  // namespace detlab
