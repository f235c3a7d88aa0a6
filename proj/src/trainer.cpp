#include "detlab/trainer.hpp"

#include <cmath>
#include <string>

#include "detlab/errors.hpp"

namespace detlab {

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw ValidationError("train: learning rate must be positive and finite");
  if (batch_size <= 0) throw ValidationError("train: batch_size must be positive");
  if (train_scenes < 0 || eval_scenes < 0)
    throw ValidationError("train: scene counts must be >= 0");
  if (atss_k <= 0) throw ValidationError("train: atss_k must be positive");
  if (!scene.valid()) throw ValidationError("train: invalid scene spec");
  if (!grid.valid()) throw ValidationError("train: invalid grid");
  if (head.num_classes != scene.num_classes)
    throw ValidationError("train: head and scene class counts differ");
  if (head.feature_dim < scene.num_classes + 5)
    throw ValidationError("train: feature_dim must be >= num_classes + 5");
  loss.validate();
}

std::vector<LocationTarget> make_targets(const std::vector<LocationOutput>& outs,
                                         const GridSpec& grid,
                                         const std::vector<GtObject>& gts,
                                         int num_classes, int atss_k,
                                         bool q_from_refined) {
  const Assignment assignment = atss_assign(grid, gts, atss_k);
  std::vector<BBox> q_boxes(outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i)
    q_boxes[i] = q_from_refined ? outs[i].refined_box : outs[i].initial_box;
  std::vector<LocationTarget> targets =
      build_targets(assignment, q_boxes, gts, num_classes);
  // bbox-loss weight stays tied to the initial box regardless of where the
  // classification target comes from
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!targets[i].gt.has_value()) continue;
    targets[i].q_weight = iou(outs[i].initial_box, *targets[i].gt);
  }
  return targets;
}

SceneLoss loss_with_targets(const MicroHead& head, const FeatureGrid& features,
                            const std::vector<LocationTarget>& targets,
                            const LossConfig& loss_cfg,
                            const ForwardOptions& opts) {
  HeadForward fwd(head, features, opts);
  const auto& outs = fwd.outputs();
  std::vector<LocationPrediction> preds(outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i) {
    preds[i].scores = outs[i].scores;
    preds[i].initial = outs[i].initial_box;
    preds[i].refined = outs[i].refined_box;
  }
  const TotalLoss tl = total_loss(preds, targets, loss_cfg);
  SceneLoss out;
  out.loss = tl.value;
  out.grad = fwd.backward(tl.grads);
  out.num_pos = tl.num_pos;
  return out;
}

std::vector<Candidate> make_candidates(const std::vector<LocationOutput>& outs) {
  std::vector<Candidate> cands(outs.size());
  for (std::size_t i = 0; i < outs.size(); ++i) {
    cands[i].box = outs[i].refined_box;
    cands[i].scores = outs[i].scores;
    cands[i].level = outs[i].level;
    cands[i].ctr = outs[i].ctr;
    cands[i].source_index = static_cast<int>(i);
  }
  return cands;
}

EvalSummary evaluate_head(const MicroHead& head,
                          const std::vector<SceneRecord>& scenes,
                          const GridSpec& grid,
                          const InferenceFilterConfig& infer,
                          const ForwardOptions& opts) {
  std::vector<DetectionRecord> dets;
  std::vector<GtRecord> gts;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const int image_id = static_cast<int>(s);
    const FeatureGrid fg =
        render_features(scenes[s], grid, head.cfg.feature_dim, head.cfg.num_classes);
    const auto outs = forward(head, fg, opts);
    const auto detections = inference_filter(make_candidates(outs), infer);
    for (const auto& det : detections)
      dets.push_back({image_id, det.box, det.class_id, det.score});
    for (const auto& obj : scenes[s].objects)
      gts.push_back({image_id, obj.box, obj.class_id});
  }
  return coco_ap(std::move(dets), gts, head.cfg.num_classes);
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();

  const std::vector<SceneRecord> train_set =
      generate_dataset(mix_seed(cfg.seed, 1), cfg.scene, cfg.train_scenes);
  const std::vector<SceneRecord> eval_set =
      generate_dataset(mix_seed(cfg.seed, 2), cfg.scene, cfg.eval_scenes);

  TrainResult result;
  result.head = init_head(cfg.head, mix_seed(cfg.seed, 0));

  std::vector<FeatureGrid> train_features;
  train_features.reserve(train_set.size());
  for (const auto& scene : train_set)
    train_features.push_back(render_features(scene, cfg.grid, cfg.head.feature_dim,
                                             cfg.head.num_classes));

  Rng order_rng(mix_seed(cfg.seed, 3));
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t n_params = result.head.params.size();
  std::vector<double> batch_grad(n_params, 0.0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = order_rng.uniform_index(i);
        std::swap(order[i - 1], order[j]);
      }
    }

    double epoch_loss = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t batch_end =
          std::min(done + static_cast<std::size_t>(cfg.batch_size), order.size());
      const std::size_t batch_n = batch_end - done;
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      for (std::size_t b = done; b < batch_end; ++b) {
        const std::size_t s = order[b];
        const FeatureGrid& fg = train_features[s];
        HeadForward fwd(result.head, fg, cfg.forward_opts);
        const auto& outs = fwd.outputs();
        const auto targets =
            make_targets(outs, cfg.grid, train_set[s].objects, cfg.head.num_classes,
                         cfg.atss_k, cfg.q_from_refined);
        std::vector<LocationPrediction> preds(outs.size());
        for (std::size_t i = 0; i < outs.size(); ++i) {
          preds[i].scores = outs[i].scores;
          preds[i].initial = outs[i].initial_box;
          preds[i].refined = outs[i].refined_box;
        }
        const TotalLoss tl = total_loss(preds, targets, cfg.loss);
        if (!std::isfinite(tl.value)) {
          throw DivergenceError("training loss non-finite at epoch " +
                                std::to_string(epoch) + ", scene " +
                                std::to_string(s));
        }
        epoch_loss += tl.value;
        const std::vector<double> grad = fwd.backward(tl.grads);
        for (std::size_t p = 0; p < n_params; ++p) batch_grad[p] += grad[p];
      }
      const double scale = cfg.lr / static_cast<double>(batch_n);
      for (std::size_t p = 0; p < n_params; ++p)
        result.head.params[p] -= scale * batch_grad[p];
      done = batch_end;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = train_set.empty()
                       ? 0.0
                       : epoch_loss / static_cast<double>(train_set.size());
    if (cfg.eval_scenes > 0) {
      const EvalSummary ev =
          evaluate_head(result.head, eval_set, cfg.grid, cfg.infer, cfg.forward_opts);
      m.eval_ap = ev.ap;
      m.eval_ap50 = ev.ap50;
      m.eval_ap75 = ev.ap75;
    }
    result.epochs.push_back(m);
  }

  if (cfg.eval_scenes > 0) {
    result.final_eval =
        evaluate_head(result.head, eval_set, cfg.grid, cfg.infer, cfg.forward_opts);
  } else {
    result.final_eval.per_threshold.assign(10, 0.0);
  }
  return result;
}

}  // namespace detlab
