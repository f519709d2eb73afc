#pragma once

#include <string>
#include <vector>

#include "gridplan/conformal.hpp"
#include "gridplan/lstm.hpp"
#include "gridplan/robust.hpp"
#include "gridplan/synth.hpp"

namespace gridplan {

enum class TrainMode { EndToEnd, Eto };

struct TrainConfig {
  double lambda = 0.8;  // weight on the prediction loss
  double alpha = 0.1;
  double lr = 3e-3;
  int epochs = 6;
  int batch = 8;
  uint64_t seed = 42;
  TrainMode mode = TrainMode::EndToEnd;
  int hidden = 64;
  bool conformal_floor = false;
  ClipLimits clip;
  double degeneracy_tol = 1e-6;
  double solver_tol = 1e-8;
  int solver_max_iter = 200;
  // Reuse a precomputed no-BESS scale instead of solving the baseline again
  // (the value is dataset- and model-dependent, not config-dependent).
  double task_scale_override = 0.0;
};

// Everything needed to instantiate Model 18 for one sample window.
struct InstanceTemplate {
  const Network* network = nullptr;
  ModelConfig model;
  Eigen::MatrixXd weights;
  const TimeSeries* series = nullptr;
  ScenarioSpec spec;
};

InstanceTemplate make_template(const Dataset& data, const ModelConfig& model);

// Instance with PV profiles bound at forecast start t0 and hardened boxes
// (worst-case price floored at zero, load box clipped nonnegative).
RobustInstance make_instance(const InstanceTemplate& tmpl, const BoxSet& price_box,
                             const BoxSet& load_box, int t0);

struct StepMetrics {
  double pred_loss = 0.0;   // mean NLL over used samples
  double task_loss = 0.0;   // mean normalized optimal value over solved samples
  double total = 0.0;       // lambda * pred + (1 - lambda) * task
  int solve_failures = 0;
  int samples_used = 0;
  bool aborted = false;  // more than half of the batch failed to solve
};

// One optimizer step of lambda * L_pred + (1 - lambda) * L_task over a batch.
// With lambda == 1 the optimization layer is bypassed entirely, making the
// update bit-identical to plain predictor training.
StepMetrics combined_step(LstmParams& params, AdamState& adam,
                          const std::vector<const Sample*>& batch,
                          const InstanceTemplate& tmpl, const TrainConfig& cfg,
                          double task_scale);

struct HistoryRow {
  int epoch = 0;
  double pred_loss = 0.0;
  double task_loss = 0.0;
  double total = 0.0;
  double coverage = 0.0;  // raw-box coverage on the calibration split
  int solve_failures = 0;
};

struct TrainResult {
  LstmParams params;
  CheckpointMeta meta;
  ConformalThreshold threshold;  // split-conformal threshold from the cal set
  std::vector<HistoryRow> history;
};

TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& cfg);

// Shared or per-target conformal thresholds for evaluation.
struct ThresholdSet {
  ConformalThreshold shared;
  bool per_target = false;
  ConformalThreshold price, load;
  static ThresholdSet from_shared(const ConformalThreshold& thr) {
    ThresholdSet s;
    s.shared = thr;
    return s;
  }
};

struct EvalReport {
  double task_loss = 0.0;        // mean optimal value of Model 18, raw units
  double pred_loss = 0.0;        // MSE of box midpoints vs truth
  double total_loss = 0.0;       // task + pred (raw sum)
  double total_weighted = 0.0;   // lambda * pred + (1 - lambda) * task
  double coverage = 0.0;         // score <= q* rate on the test split
  int solve_failures = 0;
  int samples = 0;
};

// Conformally inflated boxes feed the optimizer at evaluation time.
EvalReport evaluate(const LstmParams& params, const CheckpointMeta& meta,
                    const ConformalThreshold& threshold, const Dataset& data,
                    const ModelConfig& model, const TrainConfig& cfg);
EvalReport evaluate(const LstmParams& params, const CheckpointMeta& meta,
                    const ThresholdSet& thresholds, const Dataset& data,
                    const ModelConfig& model, const TrainConfig& cfg);

// Calibration over the dataset's calibration split; per_target computes
// separate price/load thresholds alongside the shared one.
ThresholdSet calibrate_on(const LstmParams& params, const Dataset& data, double alpha,
                          bool floor_index, bool per_target);

// Median procurement cost of the training set with storage disabled; the
// dimensionless task-loss scale.
double no_bess_task_scale(const Dataset& data, const ModelConfig& model,
                          const TrainConfig& cfg);

// Physical limits from the historical series: nonnegative prices capped at
// five times the historical max, loads at three times theirs.
ClipLimits clip_from_dataset(const Dataset& data);

void save_history_csv(const std::string& path, const std::vector<HistoryRow>& history);

}  // namespace gridplan
