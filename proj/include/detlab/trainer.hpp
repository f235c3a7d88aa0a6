#pragma once

#include <cstdint>
#include <vector>

#include "detlab/eval.hpp"
#include "detlab/head.hpp"
#include "detlab/ranking.hpp"
#include "detlab/scene.hpp"

namespace detlab {

struct TrainConfig {
  std::uint64_t seed = 1;
  // long enough for the quality-weighted losses to separate from their
  // self-annealing cousins on the default scenes; see the loss comparison
  int epochs = 144;
  double lr = 0.1;
  int batch_size = 4;      // scenes per SGD step
  int train_scenes = 128;
  int eval_scenes = 64;
  int atss_k = 9;
  bool q_from_refined = true;  // classification target uses the refined box
  bool shuffle = true;
  LossConfig loss;
  HeadConfig head;
  SceneSpec scene;
  // two strides so the adaptive assignment sees a spread of anchor sizes;
  // with one homogeneous level the mean+std cut can exceed every candidate
  GridSpec grid{{LevelSpec{8, 16, 16}, LevelSpec{16, 8, 8}}};
  ForwardOptions forward_opts;
  InferenceFilterConfig infer;

  void validate() const;  // throws ValidationError
};

struct EpochMetrics {
  int epoch = 0;        // 1-based
  double train_loss = 0.0;
  double eval_ap = 0.0;
  double eval_ap50 = 0.0;
  double eval_ap75 = 0.0;
};

struct TrainResult {
  MicroHead head;
  std::vector<EpochMetrics> epochs;
  EvalSummary final_eval;
};

// Targets for one scene given the current forward outputs: ATSS assignment,
// classification target q from the refined (or initial) box, bbox-loss
// weight always from the initial box.
std::vector<LocationTarget> make_targets(const std::vector<LocationOutput>& outs,
                                         const GridSpec& grid,
                                         const std::vector<GtObject>& gts,
                                         int num_classes, int atss_k,
                                         bool q_from_refined);

struct SceneLoss {
  double loss = 0.0;
  std::vector<double> grad;
  int num_pos = 0;
};

// Loss and parameter gradient with the given fixed targets. Used both by the
// SGD step (after rebuilding targets) and by finite-difference checks, which
// need the targets held constant while parameters move.
SceneLoss loss_with_targets(const MicroHead& head, const FeatureGrid& features,
                            const std::vector<LocationTarget>& targets,
                            const LossConfig& loss_cfg,
                            const ForwardOptions& opts = {});

// Head outputs as ranking candidates; source_index is the flat location.
std::vector<Candidate> make_candidates(const std::vector<LocationOutput>& outs);

EvalSummary evaluate_head(const MicroHead& head,
                          const std::vector<SceneRecord>& scenes,
                          const GridSpec& grid,
                          const InferenceFilterConfig& infer,
                          const ForwardOptions& opts = {});

// Deterministic SGD over synthetic scenes. Throws DivergenceError when the
// loss goes non-finite.
TrainResult train(const TrainConfig& cfg);

}  // namespace detlab
