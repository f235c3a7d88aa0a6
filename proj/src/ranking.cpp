#include "detlab/ranking.hpp"

#include <algorithm>
#include <cmath>

#include "detlab/errors.hpp"

namespace detlab {

std::vector<double> compose_score(const Candidate& c, RankMode mode) {
  for (double s : c.scores) {
    if (!std::isfinite(s)) throw ValidationError("compose_score: non-finite score");
  }
  switch (mode) {
    case RankMode::kCls:
    case RankMode::kIacs:
      return c.scores;
    case RankMode::kClsTimesCtr: {
      if (!c.ctr.has_value())
        throw ValidationError("compose_score: ctr required for cls*ctr ranking");
      std::vector<double> out = c.scores;
      for (double& s : out) s *= *c.ctr;
      return out;
    }
  }
  throw ValidationError("compose_score: unknown mode");
}

std::vector<Candidate> apply_oracle(
    const std::vector<Candidate>& cands, const std::vector<GtObject>& gts,
    const std::vector<std::optional<OracleAssoc>>& assoc, OracleMode mode) {
  if (assoc.size() != cands.size())
    throw ValidationError("apply_oracle: assoc/candidate count mismatch");

  std::vector<Candidate> out = cands;
  if (mode == OracleMode::kNone) return out;

  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!assoc[i].has_value()) continue;  // background untouched
    const OracleAssoc& a = *assoc[i];
    if (a.gt_index < 0 || a.gt_index >= static_cast<int>(gts.size()))
      throw ValidationError("apply_oracle: gt index out of range");
    const GtObject& gt = gts[static_cast<std::size_t>(a.gt_index)];
    Candidate& c = out[i];
    switch (mode) {
      case OracleMode::kGtCtr: {
        const double l = a.anchor.x - gt.box.x1;
        const double t = a.anchor.y - gt.box.y1;
        const double r = gt.box.x2 - a.anchor.x;
        const double b = gt.box.y2 - a.anchor.y;
        if (l < 0.0 || t < 0.0 || r < 0.0 || b < 0.0) {
          c.ctr = 0.0;
        } else {
          c.ctr = centerness({l, t, r, b});
        }
        break;
      }
      case OracleMode::kGtCtrIou:
        c.ctr = iou(c.box, gt.box);
        break;
      case OracleMode::kGtBbox:
        c.box = gt.box;
        break;
      case OracleMode::kGtCls: {
        if (gt.class_id < 0 || gt.class_id >= static_cast<int>(c.scores.size()))
          throw ValidationError("apply_oracle: gt class outside score vector");
        c.scores[static_cast<std::size_t>(gt.class_id)] = 1.0;
        break;
      }
      case OracleMode::kGtClsIou: {
        if (gt.class_id < 0 || gt.class_id >= static_cast<int>(c.scores.size()))
          throw ValidationError("apply_oracle: gt class outside score vector");
        c.scores[static_cast<std::size_t>(gt.class_id)] = iou(c.box, gt.box);
        break;
      }
      case OracleMode::kNone:
        break;
    }
  }
  return out;
}

namespace {

bool score_before(const ScoredBox& a, const ScoredBox& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.source_index < b.source_index;
}

}  // namespace

std::vector<ScoredBox> nms(std::vector<ScoredBox> cands, double iou_thr) {
  for (const auto& c : cands) {
    if (!std::isfinite(c.score)) throw ValidationError("nms: non-finite score");
  }
  std::sort(cands.begin(), cands.end(), score_before);
  std::vector<ScoredBox> kept;
  std::vector<char> alive(cands.size(), 1);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (!alive[i]) continue;
    kept.push_back(cands[i]);
    for (std::size_t j = i + 1; j < cands.size(); ++j) {
      if (!alive[j]) continue;
      if (iou(cands[i].box, cands[j].box) > iou_thr) alive[j] = 0;
    }
  }
  return kept;
}

std::vector<ScoredBox> soft_nms(std::vector<ScoredBox> cands,
                                SoftNmsMethod method, double iou_thr,
                                double sigma, double score_floor) {
  if (method == SoftNmsMethod::kGaussian && sigma <= 0.0)
    throw ValidationError("soft_nms: sigma must be positive");
  for (const auto& c : cands) {
    if (!std::isfinite(c.score)) throw ValidationError("soft_nms: non-finite score");
  }

  std::vector<ScoredBox> out;
  std::vector<ScoredBox> pool = std::move(cands);
  while (!pool.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pool.size(); ++i) {
      if (score_before(pool[i], pool[best])) best = i;
    }
    ScoredBox top = pool[best];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    if (top.score < score_floor) break;  // nothing left above the floor
    out.push_back(top);

    std::vector<ScoredBox> next;
    next.reserve(pool.size());
    for (auto& c : pool) {
      const double ov = iou(top.box, c.box);
      if (method == SoftNmsMethod::kLinear) {
        if (ov > iou_thr) c.score *= (1.0 - ov);
      } else {
        c.score *= std::exp(-(ov * ov) / sigma);
      }
      if (c.score >= score_floor) next.push_back(c);
    }
    pool = std::move(next);
  }
  return out;
}

std::vector<Detection> inference_filter(const std::vector<Candidate>& cands,
                                        const InferenceFilterConfig& cfg) {
  if (cfg.topk_per_level <= 0)
    throw ValidationError("inference_filter: topk_per_level must be positive");

  struct Composed {
    const Candidate* cand;
    std::vector<double> scores;
    double max_score;
  };

  // compose and floor-filter, grouped by level
  std::vector<int> levels;
  std::vector<std::vector<Composed>> by_level;
  for (const auto& c : cands) {
    std::vector<double> s = compose_score(c, cfg.mode);
    double mx = 0.0;
    for (double v : s) mx = std::max(mx, v);
    if (mx <= cfg.score_floor) continue;
    std::size_t li = 0;
    for (; li < levels.size(); ++li) {
      if (levels[li] == c.level) break;
    }
    if (li == levels.size()) {
      levels.push_back(c.level);
      by_level.emplace_back();
    }
    by_level[li].push_back({&c, std::move(s), mx});
  }

  // per-level top-k by max composed score
  std::vector<Composed> merged;
  for (auto& group : by_level) {
    std::sort(group.begin(), group.end(), [](const Composed& a, const Composed& b) {
      if (a.max_score != b.max_score) return a.max_score > b.max_score;
      return a.cand->source_index < b.cand->source_index;
    });
    const std::size_t take =
        std::min<std::size_t>(group.size(), static_cast<std::size_t>(cfg.topk_per_level));
    for (std::size_t i = 0; i < take; ++i) merged.push_back(std::move(group[i]));
  }

  // class-wise expansion and NMS
  std::size_t num_classes = 0;
  for (const auto& m : merged) num_classes = std::max(num_classes, m.scores.size());
  std::vector<Detection> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<ScoredBox> pool;
    for (const auto& m : merged) {
      if (c >= m.scores.size()) continue;
      if (m.scores[c] <= cfg.score_floor) continue;
      pool.push_back({m.cand->box, m.scores[c], m.cand->source_index});
    }
    for (const auto& k : nms(std::move(pool), cfg.nms_thr)) {
      out.push_back({k.box, static_cast<int>(c), k.score});
    }
  }
  std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    if (a.box.x1 != b.box.x1) return a.box.x1 < b.box.x1;
    return a.box.y1 < b.box.y1;
  });
  return out;
}

}  // namespace detlab
