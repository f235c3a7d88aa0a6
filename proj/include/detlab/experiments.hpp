#pragma once

#include <string>

#include "detlab/config.hpp"
#include "detlab/dump_io.hpp"
#include "detlab/report.hpp"
#include "detlab/trainer.hpp"

namespace detlab {

// Cell lookup by row label and column name; throws ValidationError when the
// cell does not exist.
double report_cell(const ReportTable& table, const std::string& row,
                   const std::string& column);

// Trains with cfg.train and reports per-epoch loss and held-out AP plus a
// final row. When out_result is given the trained head and metrics are
// copied there for further use (dump emission).
ReportTable run_train_experiment(const ExperimentConfig& cfg,
                                 TrainResult* out_result = nullptr);

// Trains a head, then evaluates every score/box/ctr replacement mode with
// and without the auxiliary ctr factor in the ranking score. Rows are the
// replacement modes, columns ap_with_ctr / ap_no_ctr.
ReportTable run_oracle_study(const ExperimentConfig& cfg);

// The same study driven by an ingested candidate dump instead of a fresh
// training run. Candidates need gt_index (and, for the true-centerness
// mode, anchor) fields to be treated as foreground.
ReportTable run_oracle_study_on_dump(const ExperimentConfig& cfg,
                                     const Dump& dump);

// Trains one head per (variant, seed) and reports per-variant means over
// the successful seeds plus a failed-run count. Optional rows cover the
// q-weighting ablation, the frozen-refinement ablation and (alpha, gamma)
// sweep points.
ReportTable run_loss_compare(const ExperimentConfig& cfg);

// Scores an ingested dump: per-image inference filtering of its candidates
// against its annotations.
ReportTable run_eval_dump(const ExperimentConfig& cfg, const Dump& dump);

// Held-out scenes of a finished run as a dump document: images,
// annotations, and per-location candidates with score vectors, ctr, level,
// anchor and assigned gt.
Dump make_eval_dump(const ExperimentConfig& cfg, const TrainResult& result);

}  // namespace detlab
