#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "detlab/trainer.hpp"

namespace detlab {

// Full experiment configuration. Every field has a default; the empty
// document resolves to the defaults. Sections: seed, train, scene, grid,
// loss, head, infer, oracle, loss_compare.
struct ExperimentConfig {
  TrainConfig train;  // seed lives here

  // oracle study
  int oracle_scenes = 500;

  // loss comparison
  std::vector<LossVariant> compare_variants{
      LossVariant::kFocal, LossVariant::kVarifocal, LossVariant::kQualityFocal};
  std::vector<std::uint64_t> compare_seeds{1, 2, 3, 4, 5};
  bool compare_q_ablation = true;       // extra VFL row without q-weighting
  bool compare_refine_ablation = true;  // extra VFL row with frozen scales
  double compare_fl_alpha = 0.25;       // focal-loss runs use their own alpha
  std::vector<std::pair<double, double>> sweep;  // extra VFL (alpha, gamma) rows
};

// Parses a JSON config document. Unknown keys and type mismatches are
// rejected with the offending path in the message. Empty input (or an empty
// file) yields the defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// The fully resolved config as canonical JSON (sorted keys, all defaults
// materialized). Reports embed this so any run can be reproduced from its
// report alone.
std::string resolved_config_json(const ExperimentConfig& cfg);

// FNV-1a 64 over the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::string to_string(LossVariant v);
std::string to_string(RankMode m);
std::string to_string(OracleMode m);

}  // namespace detlab
