#include "gridplan/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "gridplan/ipm.hpp"
#include "gridplan/rng.hpp"
#include "gridplan/sensitivity.hpp"

namespace gridplan {

ClipLimits clip_from_dataset(const Dataset& data) {
  ClipLimits clip;
  double pmax = 0.0, lmax = 0.0;
  for (const Sample& s : data.samples) {
    pmax = std::max(pmax, s.truth.leftCols(3).maxCoeff());
    lmax = std::max(lmax, s.truth.rightCols(3).maxCoeff());
  }
  clip.price_min = 0.0;
  clip.price_max = pmax > 0 ? 5.0 * pmax : 1e3;
  clip.load_min = 0.0;
  clip.load_max = lmax > 0 ? 3.0 * lmax : 10.0;
  return clip;
}

InstanceTemplate make_template(const Dataset& data, const ModelConfig& model) {
  InstanceTemplate tmpl;
  tmpl.network = &data.network;
  tmpl.model = model;
  tmpl.weights = data.weights;
  tmpl.series = &data.series;
  tmpl.spec = data.spec;
  tmpl.spec.horizon = model.horizon;
  return tmpl;
}

RobustInstance make_instance(const InstanceTemplate& tmpl, const BoxSet& price_box,
                             const BoxSet& load_box, int t0) {
  RobustInstance inst;
  inst.network = *tmpl.network;
  inst.config = tmpl.model;
  inst.weights = tmpl.weights;
  for (int b = 0; b < inst.network.bus_count(); ++b) {
    if (inst.network.buses[b].kind == BusKind::Slack) continue;
    inst.network.buses[b].pv_profile =
        pv_profile_for(inst.network, b, *tmpl.series, tmpl.spec, t0);
  }
  // The LP needs nonnegative worst-case prices and loads; stray negative
  // forecasts are floored rather than rejected.
  inst.price_box = price_box;
  inst.load_box = load_box;
  inst.price_box.upper = inst.price_box.upper.cwiseMax(0.0);
  inst.price_box.lower = inst.price_box.lower.cwiseMin(inst.price_box.upper);
  inst.load_box.upper = inst.load_box.upper.cwiseMax(0.0);
  inst.load_box.lower = inst.load_box.lower.cwiseMin(inst.load_box.upper);
  return inst;
}

namespace {

struct TaskEval {
  bool ok = false;
  double value = 0.0;                  // raw objective
  Eigen::MatrixXd d_upper_price;       // horizon x 3, wrt raw (unclamped) uppers
  Eigen::MatrixXd d_upper_load;        // horizon x 3
};

TaskEval solve_task(const InstanceTemplate& tmpl, const ForecastBoxes& boxes, int t0,
                    const TrainConfig& cfg, bool want_gradient) {
  TaskEval out;
  const int T = tmpl.model.horizon;
  RobustInstance inst = make_instance(tmpl, boxes.price, boxes.load, t0);
  try {
    SingleStageModel model = build_single_stage(inst);
    SolveOptions opts;
    opts.tol = cfg.solver_tol;
    opts.max_iter = cfg.solver_max_iter;
    SolveResult r = solve(model.lp, opts);
    if (r.status != SolveStatus::Optimal) return out;
    out.ok = true;
    out.value = r.objective;
    if (!want_gradient) return out;

    GradientResult g = value_gradient(r, model.pmap, model.lp, cfg.degeneracy_tol);
    out.d_upper_price = Eigen::MatrixXd::Zero(T, 3);
    out.d_upper_load = Eigen::MatrixXd::Zero(T, 3);
    for (int t = 0; t < T; ++t) {
      for (int p = 0; p < 3; ++p) {
        // Clamped entries do not move with the raw forecast.
        bool price_clamped = boxes.price.upper(t, p) < 0.0;
        bool load_clamped = boxes.load.upper(t, p) < 0.0;
        out.d_upper_price(t, p) =
            price_clamped ? 0.0 : g.gradient(model.price_param(t, p));
        out.d_upper_load(t, p) = load_clamped ? 0.0 : g.gradient(model.load_param(t, p));
      }
    }
  } catch (const Error&) {
    out.ok = false;
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 1.0;
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double no_bess_task_scale(const Dataset& data, const ModelConfig& model,
                          const TrainConfig& cfg) {
  InstanceTemplate tmpl = make_template(data, model);
  Network no_bess = data.network;
  for (Bus& b : no_bess.buses) b.bess_candidate = false;
  tmpl.network = &no_bess;

  std::vector<double> values;
  for (int idx : data.train_idx) {
    const Sample& s = data.samples[idx];
    BoxSet price = BoxSet::degenerate(s.truth.leftCols(3));
    BoxSet load = BoxSet::degenerate(s.truth.rightCols(3));
    ForecastBoxes boxes{price, load};
    TaskEval ev = solve_task(tmpl, boxes, s.t0, cfg, false);
    if (ev.ok) values.push_back(std::abs(ev.value));
  }
  if (values.empty()) {
    throw Error(ErrorKind::SolveFailed, "no-BESS baseline failed on every training sample");
  }
  double scale = median(values);
  return scale > 1e-9 ? scale : 1.0;
}

StepMetrics combined_step(LstmParams& params, AdamState& adam,
                          const std::vector<const Sample*>& batch,
                          const InstanceTemplate& tmpl, const TrainConfig& cfg,
                          double task_scale) {
  if (batch.empty()) throw Error(ErrorKind::ConfigInvalid, "empty batch");
  const double lambda = cfg.lambda;
  const bool need_task = lambda < 1.0;

  StepMetrics metrics;
  LstmGrads grads = LstmGrads::zero(params.dims);
  double pred_sum = 0.0, task_sum = 0.0;
  int task_count = 0;

  for (const Sample* sample : batch) {
    LstmCache cache;
    QuantileForecast forecast = forward(params, sample->window, &cache);
    NllResult nll = nll_loss(forecast, sample->truth, cfg.alpha);

    Eigen::MatrixXd d_lower = lambda * nll.d_lower;
    Eigen::MatrixXd d_upper = lambda * nll.d_upper;

    if (need_task) {
      ForecastBoxes boxes = raw_boxes(forecast);
      TaskEval ev = solve_task(tmpl, boxes, sample->t0, cfg, true);
      if (!ev.ok) {
        ++metrics.solve_failures;
        continue;  // sample skipped entirely
      }
      double w = (1.0 - lambda) / task_scale;
      d_upper.leftCols(3) += w * ev.d_upper_price;
      d_upper.rightCols(3) += w * ev.d_upper_load;
      task_sum += ev.value / task_scale;
      ++task_count;
    }

    grads.add(backward(params, sample->window, cache, d_lower, d_upper));
    pred_sum += nll.loss;
    ++metrics.samples_used;
  }

  if (metrics.solve_failures * 2 > static_cast<int>(batch.size())) {
    metrics.aborted = true;
    return metrics;
  }
  if (metrics.samples_used == 0) {
    metrics.aborted = true;
    return metrics;
  }

  grads.scale(1.0 / metrics.samples_used);
  adam_step(params, grads, cfg.lr, adam);

  metrics.pred_loss = pred_sum / metrics.samples_used;
  metrics.task_loss = task_count ? task_sum / task_count : 0.0;
  metrics.total = lambda * metrics.pred_loss + (1.0 - lambda) * metrics.task_loss;
  return metrics;
}

namespace {

void fit_standardization(LstmParams& params, const Dataset& data) {
  const LstmDims& d = params.dims;
  const int I = d.input_size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(I + 1);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(I + 1);
  int64_t rows = 0;
  for (int idx : data.train_idx) {
    const Sample& s = data.samples[idx];
    for (int m = 0; m < d.history; ++m) {
      for (int j = 0; j < I; ++j) {
        double v = s.window(m * I + j);
        mean(j) += v;
        sq(j) += v * v;
      }
    }
    double p = s.window(s.window.size() - 1);
    mean(I) += p;
    sq(I) += p * p;
    ++rows;
  }
  if (rows == 0) throw Error(ErrorKind::ConfigInvalid, "empty training split");
  for (int j = 0; j <= I; ++j) {
    double n = static_cast<double>(j < I ? rows * d.history : rows);
    mean(j) /= n;
    double var = std::max(sq(j) / n - mean(j) * mean(j), 1e-12);
    params.in_mean(j) = mean(j);
    params.in_std(j) = std::sqrt(var);
  }

  Eigen::VectorXd omean = Eigen::VectorXd::Zero(6), osq = Eigen::VectorXd::Zero(6);
  int64_t orows = 0;
  for (int idx : data.train_idx) {
    const Sample& s = data.samples[idx];
    for (int t = 0; t < s.truth.rows(); ++t)
      for (int k = 0; k < 6; ++k) {
        omean(k) += s.truth(t, k);
        osq(k) += s.truth(t, k) * s.truth(t, k);
      }
    orows += s.truth.rows();
  }
  for (int k = 0; k < 6; ++k) {
    omean(k) /= orows;
    double var = std::max(osq(k) / orows - omean(k) * omean(k), 1e-12);
    params.out_mean(k) = omean(k);
    params.out_std(k) = std::sqrt(var);
  }
}

std::vector<double> calibration_scores(const LstmParams& params, const Dataset& data) {
  std::vector<double> scores;
  for (int idx : data.cal_idx) {
    const Sample& s = data.samples[idx];
    scores.push_back(score(forward(params, s.window), s.truth));
  }
  return scores;
}

}  // namespace

TrainResult train(const Dataset& data, const ModelConfig& model, const TrainConfig& cfg) {
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) {
    throw Error(ErrorKind::ConfigInvalid, "lambda must lie in [0, 1]");
  }
  if (cfg.epochs < 0 || cfg.batch < 1) {
    throw Error(ErrorKind::ConfigInvalid, "epochs must be >= 0 and batch >= 1");
  }
  if (data.train_idx.empty() || data.cal_idx.empty()) {
    throw Error(ErrorKind::ConfigInvalid, "dataset needs nonempty train and cal splits");
  }

  LstmDims dims;
  dims.n_buses = static_cast<int>(data.series.bus_load.size());
  dims.history = data.spec.history;
  dims.hidden = cfg.hidden;
  dims.horizon = model.horizon;

  TrainResult result;
  result.params = LstmParams::init(dims, cfg.seed);
  fit_standardization(result.params, data);

  double task_scale = cfg.task_scale_override > 0.0 ? cfg.task_scale_override
                                                    : no_bess_task_scale(data, model, cfg);

  TrainConfig step_cfg = cfg;
  if (cfg.mode == TrainMode::Eto) step_cfg.lambda = 1.0;

  InstanceTemplate tmpl = make_template(data, model);
  AdamState adam = AdamState::zero(dims);
  Rng shuffle_rng(cfg.seed ^ 0x0badc0deULL);

  std::vector<int> order = data.train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);

    HistoryRow row;
    row.epoch = epoch;
    double pred = 0.0, task = 0.0;
    int nbatches = 0, ntask = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
      std::vector<const Sample*> batch;
      for (size_t i = b0; i < std::min(order.size(), b0 + cfg.batch); ++i)
        batch.push_back(&data.samples[order[i]]);
      StepMetrics m = combined_step(result.params, adam, batch, tmpl, step_cfg, task_scale);
      row.solve_failures += m.solve_failures;
      if (m.aborted) continue;
      pred += m.pred_loss;
      ++nbatches;
      if (step_cfg.lambda < 1.0) {
        task += m.task_loss;
        ++ntask;
      }
    }
    row.pred_loss = nbatches ? pred / nbatches : 0.0;
    row.task_loss = ntask ? task / ntask : std::nan("");
    row.total = step_cfg.lambda * row.pred_loss +
                (1.0 - step_cfg.lambda) * (ntask ? row.task_loss : 0.0);
    // raw-box coverage on the calibration split as a training diagnostic
    {
      std::vector<double> scores = calibration_scores(result.params, data);
      int inside = 0;
      for (double s : scores)
        if (s <= 0.0) ++inside;
      row.coverage = scores.empty() ? 0.0 : static_cast<double>(inside) / scores.size();
    }
    result.history.push_back(row);
  }

  result.threshold = calibrate(calibration_scores(result.params, data), cfg.alpha,
                               cfg.conformal_floor);
  result.meta.lambda = cfg.lambda;
  result.meta.alpha = cfg.alpha;
  result.meta.task_scale = task_scale;
  result.meta.seed = cfg.seed;
  result.meta.epochs = cfg.epochs;
  result.meta.mode = cfg.mode == TrainMode::Eto ? "eto" : "end_to_end";
  return result;
}

EvalReport evaluate(const LstmParams& params, const CheckpointMeta& meta,
                    const ConformalThreshold& threshold, const Dataset& data,
                    const ModelConfig& model, const TrainConfig& cfg) {
  return evaluate(params, meta, ThresholdSet::from_shared(threshold), data, model, cfg);
}

ThresholdSet calibrate_on(const LstmParams& params, const Dataset& data, double alpha,
                          bool floor_index, bool per_target) {
  std::vector<double> shared, price, load;
  for (int idx : data.cal_idx) {
    const Sample& s = data.samples[idx];
    QuantileForecast f = forward(params, s.window);
    shared.push_back(score(f, s.truth));
    if (per_target) {
      price.push_back(score_cols(f, s.truth, 0, 3));
      load.push_back(score_cols(f, s.truth, 3, 6));
    }
  }
  ThresholdSet out;
  out.shared = calibrate(shared, alpha, floor_index);
  out.per_target = per_target;
  if (per_target) {
    out.price = calibrate(price, alpha, floor_index);
    out.load = calibrate(load, alpha, floor_index);
  }
  return out;
}

EvalReport evaluate(const LstmParams& params, const CheckpointMeta& meta,
                    const ThresholdSet& thresholds, const Dataset& data,
                    const ModelConfig& model, const TrainConfig& cfg) {
  const ConformalThreshold& threshold =
      thresholds.per_target ? thresholds.price : thresholds.shared;
  if (threshold.m_cal <= 0) {
    throw Error(ErrorKind::MissingThreshold, "threshold has no calibration behind it");
  }
  if (data.test_idx.empty()) {
    throw Error(ErrorKind::EmptyTestSet, "dataset has no test samples");
  }
  InstanceTemplate tmpl = make_template(data, model);

  EvalReport rep;
  double task_sum = 0.0;
  int task_count = 0;
  double mse_sum = 0.0;
  int64_t mse_count = 0;
  int covered = 0;
  for (int idx : data.test_idx) {
    const Sample& s = data.samples[idx];
    QuantileForecast f = forward(params, s.window);
    if (thresholds.per_target) {
      if (score_cols(f, s.truth, 0, 3) <= thresholds.price.q_star &&
          score_cols(f, s.truth, 3, 6) <= thresholds.load.q_star)
        ++covered;
    } else if (score(f, s.truth) <= thresholds.shared.q_star) {
      ++covered;
    }

    Eigen::MatrixXd mid = 0.5 * (f.lower + f.upper);
    mse_sum += (mid - s.truth).array().square().sum();
    mse_count += s.truth.size();

    ForecastBoxes boxes =
        thresholds.per_target
            ? inflate_per_target(f, thresholds.price, thresholds.load, cfg.clip)
            : inflate(f, thresholds.shared, cfg.clip);
    // physical limits apply to finite thresholds as well: Model 18 needs
    // electrically plausible bounds
    boxes.price.upper = boxes.price.upper.cwiseMin(cfg.clip.price_max).cwiseMax(cfg.clip.price_min);
    boxes.price.lower = boxes.price.lower.cwiseMax(cfg.clip.price_min).cwiseMin(boxes.price.upper);
    boxes.load.upper = boxes.load.upper.cwiseMin(cfg.clip.load_max).cwiseMax(cfg.clip.load_min);
    boxes.load.lower = boxes.load.lower.cwiseMax(cfg.clip.load_min).cwiseMin(boxes.load.upper);
    TaskEval ev = solve_task(tmpl, boxes, s.t0, cfg, false);
    if (ev.ok) {
      task_sum += ev.value;
      ++task_count;
    } else {
      ++rep.solve_failures;
    }
    ++rep.samples;
  }
  rep.task_loss = task_count ? task_sum / task_count
                             : std::numeric_limits<double>::quiet_NaN();
  rep.pred_loss = mse_sum / static_cast<double>(mse_count);
  rep.total_loss = rep.task_loss + rep.pred_loss;
  rep.total_weighted = meta.lambda * rep.pred_loss + (1.0 - meta.lambda) * rep.task_loss;
  rep.coverage = static_cast<double>(covered) / rep.samples;
  return rep;
}

void save_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::ValidationError, "cannot write " + path);
  os << "epoch,pred_loss,task_loss,total,coverage,solve_failures\n";
  os << std::setprecision(12);
  for (const HistoryRow& r : history) {
    os << r.epoch << "," << r.pred_loss << "," << r.task_loss << "," << r.total << ","
       << r.coverage << "," << r.solve_failures << "\n";
  }
}

}  // namespace gridplan
