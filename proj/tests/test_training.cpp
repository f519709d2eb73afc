#include <cmath>
#include <fstream>

#include "doctest.h"
#include "gridplan/ipm.hpp"
#include "gridplan/sensitivity.hpp"
#include "gridplan/training.hpp"

using namespace gridplan;

namespace {

ScenarioSpec tiny_spec() {
  ScenarioSpec spec;
  spec.n_buses = 2;
  spec.days = 12;
  spec.seed = 5;
  spec.history = 4;
  spec.horizon = 3;
  spec.stride = 7;
  return spec;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.horizon = 3;
  m.sd_min = -0.3;
  m.sd_max = 0.3;
  m.soc_max = 2.0;
  return m;
}

TrainConfig tiny_train() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 4;
  cfg.hidden = 6;
  cfg.lr = 1e-2;
  cfg.seed = 11;
  return cfg;
}

double loss_at(const LstmParams& params, const Sample& s, const InstanceTemplate& tmpl,
               const TrainConfig& cfg, double task_scale) {
  QuantileForecast f = forward(params, s.window);
  double pred = nll_loss(f, s.truth, cfg.alpha).loss;
  ForecastBoxes boxes = raw_boxes(f);
  RobustInstance inst = make_instance(tmpl, boxes.price, boxes.load, s.t0);
  SingleStageModel m = build_single_stage(inst);
  SolveResult r = solve(m.lp, cfg.solver_tol, cfg.solver_max_iter);
  REQUIRE(r.status == SolveStatus::Optimal);
  return cfg.lambda * pred + (1.0 - cfg.lambda) * r.objective / task_scale;
}

}  // namespace

TEST_CASE("lambda = 1 is bit-identical to pure predictor training") {
  Dataset data = generate(tiny_spec());
  ModelConfig model = tiny_model();
  TrainConfig cfg = tiny_train();
  cfg.lambda = 1.0;
  InstanceTemplate tmpl = make_template(data, model);

  LstmDims dims;
  dims.n_buses = 2;
  dims.history = data.spec.history;
  dims.hidden = cfg.hidden;
  dims.horizon = model.horizon;

  LstmParams a = LstmParams::init(dims, cfg.seed);
  LstmParams b = a;
  AdamState sa = AdamState::zero(dims), sb = AdamState::zero(dims);

  std::vector<const Sample*> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(&data.samples[data.train_idx[i]]);

  combined_step(a, sa, batch, tmpl, cfg, 1.0);

  // reference: plain NLL step, mean over the batch
  LstmGrads grads = LstmGrads::zero(dims);
  for (const Sample* s : batch) {
    LstmCache cache;
    QuantileForecast f = forward(b, s->window, &cache);
    NllResult nll = nll_loss(f, s->truth, cfg.alpha);
    grads.add(backward(b, s->window, cache, nll.d_lower, nll.d_upper));
  }
  grads.scale(1.0 / batch.size());
  adam_step(b, grads, cfg.lr, sb);

  CHECK((a.w_in - b.w_in).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.w_rec - b.w_rec).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.head_lo - b.head_lo).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.head_gap - b.head_gap).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("combined gradient matches finite differences end to end") {
  Dataset data = generate(tiny_spec());
  ModelConfig model = tiny_model();
  TrainConfig cfg = tiny_train();
  cfg.lambda = 0.5;
  InstanceTemplate tmpl = make_template(data, model);
  double task_scale = no_bess_task_scale(data, model, cfg);

  LstmDims dims;
  dims.n_buses = 2;
  dims.history = data.spec.history;
  dims.hidden = 4;
  dims.horizon = model.horizon;
  LstmParams params = LstmParams::init(dims, 3);
  // standardization so the boxes land in a sane range
  {
    TrainConfig fitcfg = cfg;
    fitcfg.epochs = 0;
    TrainResult warm = train(data, model, fitcfg);
    params.in_mean = warm.params.in_mean;
    params.in_std = warm.params.in_std;
    params.out_mean = warm.params.out_mean;
    params.out_std = warm.params.out_std;
  }

  const Sample& s = data.samples[data.train_idx[1]];

  // analytic gradient of lambda*nll + (1-lambda)*task/scale
  LstmCache cache;
  QuantileForecast f = forward(params, s.window, &cache);
  NllResult nll = nll_loss(f, s.truth, cfg.alpha);
  ForecastBoxes boxes = raw_boxes(f);
  RobustInstance inst = make_instance(tmpl, boxes.price, boxes.load, s.t0);
  SingleStageModel m = build_single_stage(inst);
  SolveResult r = solve(m.lp, 1e-9, 400);
  REQUIRE(r.status == SolveStatus::Optimal);
  GradientResult g = value_gradient(r, m.pmap, m.lp);
  if (g.degenerate) return;  // FD through a kink would be meaningless

  Eigen::MatrixXd d_lower = cfg.lambda * nll.d_lower;
  Eigen::MatrixXd d_upper = cfg.lambda * nll.d_upper;
  double w = (1.0 - cfg.lambda) / task_scale;
  for (int t = 0; t < model.horizon; ++t)
    for (int p = 0; p < 3; ++p) {
      d_upper(t, p) += w * g.gradient(m.price_param(t, p));
      d_upper(t, 3 + p) += w * g.gradient(m.load_param(t, p));
    }
  LstmGrads grads = backward(params, s.window, cache, d_lower, d_upper);

  // FD over a 16-parameter subsample
  struct View {
    double* p;
    const double* g;
  };
  std::vector<View> views;
  auto sample_tensor = [&views](Eigen::MatrixXd& p, const Eigen::MatrixXd& g, int k) {
    for (int i = 0; i < k; ++i) {
      int idx = (i * 37) % p.size();
      views.push_back({p.data() + idx, g.data() + idx});
    }
  };
  sample_tensor(params.w_in, grads.w_in, 4);
  sample_tensor(params.w_rec, grads.w_rec, 4);
  sample_tensor(params.head_lo, grads.head_lo, 4);
  sample_tensor(params.head_gap, grads.head_gap, 4);

  const double h = 1e-5;
  for (auto& v : views) {
    double keep = *v.p;
    *v.p = keep + h;
    double up = loss_at(params, s, tmpl, cfg, task_scale);
    *v.p = keep - h;
    double dn = loss_at(params, s, tmpl, cfg, task_scale);
    *v.p = keep;
    double fd = (up - dn) / (2 * h);
    CHECK(std::abs(fd - *v.g) <= 1e-3 * (1.0 + std::abs(fd)));
  }
}

TEST_CASE("identical samples give the single-sample update under the mean convention") {
  Dataset data = generate(tiny_spec());
  ModelConfig model = tiny_model();
  TrainConfig cfg = tiny_train();
  cfg.lambda = 1.0;
  InstanceTemplate tmpl = make_template(data, model);

  LstmDims dims;
  dims.n_buses = 2;
  dims.history = data.spec.history;
  dims.hidden = cfg.hidden;
  dims.horizon = model.horizon;
  LstmParams a = LstmParams::init(dims, 9);
  LstmParams b = a;
  AdamState sa = AdamState::zero(dims), sb = AdamState::zero(dims);

  const Sample* s = &data.samples[data.train_idx[0]];
  combined_step(a, sa, {s, s}, tmpl, cfg, 1.0);
  combined_step(b, sb, {s}, tmpl, cfg, 1.0);
  CHECK((a.w_in - b.w_in).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.head_gap_b - b.head_gap_b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero epochs returns the initial parameters and still evaluates") {
  Dataset data = generate(tiny_spec());
  ModelConfig model = tiny_model();
  TrainConfig cfg = tiny_train();
  cfg.epochs = 0;

  TrainResult res = train(data, model, cfg);
  LstmDims dims;
  dims.n_buses = 2;
  dims.history = data.spec.history;
  dims.hidden = cfg.hidden;
  dims.horizon = model.horizon;
  LstmParams init = LstmParams::init(dims, cfg.seed);
  CHECK((res.params.w_in - init.w_in).cwiseAbs().maxCoeff() == 0.0);
  CHECK(res.history.empty());
  CHECK(res.threshold.m_cal == static_cast<int>(data.cal_idx.size()));

  TrainConfig eval_cfg = cfg;
  eval_cfg.clip = clip_from_dataset(data);
  EvalReport rep = evaluate(res.params, res.meta, res.threshold, data, model, eval_cfg);
  CHECK(rep.samples == static_cast<int>(data.test_idx.size()));
  CHECK(std::isfinite(rep.pred_loss));
  CHECK(rep.coverage >= 0.0);
  CHECK(rep.coverage <= 1.0);
  // untrained forecasts may be electrically impossible; the report then
  // carries the failure count rather than a task loss
  if (rep.solve_failures < rep.samples) {
    CHECK(std::isfinite(rep.task_loss));
    CHECK(rep.total_loss == doctest::Approx(rep.task_loss + rep.pred_loss));
  }
}

TEST_CASE("training improves the prediction loss and records history") {
  Dataset data = generate(tiny_spec());
  ModelConfig model = tiny_model();
  TrainConfig cfg = tiny_train();
  cfg.epochs = 8;
  cfg.mode = TrainMode::Eto;

  TrainResult res = train(data, model, cfg);
  REQUIRE(res.history.size() == 8);
  CHECK(res.history.back().pred_loss < res.history.front().pred_loss);
  CHECK(res.meta.mode == "eto");

  save_history_csv("/tmp/gridplan_hist.csv", res.history);
  std::ifstream is("/tmp/gridplan_hist.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "epoch,pred_loss,task_loss,total,coverage,solve_failures");
}

TEST_CASE("evaluation task loss is invariant to test order") {
  Dataset data = generate(tiny_spec());
  ModelConfig model = tiny_model();
  TrainConfig cfg = tiny_train();
  cfg.epochs = 4;
  cfg.mode = TrainMode::Eto;
  cfg.clip = clip_from_dataset(data);
  TrainResult res = train(data, model, cfg);

  EvalReport r1 = evaluate(res.params, res.meta, res.threshold, data, model, cfg);
  REQUIRE(r1.solve_failures < r1.samples);
  Dataset shuffled = data;
  std::reverse(shuffled.test_idx.begin(), shuffled.test_idx.end());
  EvalReport r2 = evaluate(res.params, res.meta, res.threshold, shuffled, model, cfg);
  CHECK(r1.task_loss == doctest::Approx(r2.task_loss).epsilon(1e-12));
  CHECK(r1.pred_loss == doctest::Approx(r2.pred_loss).epsilon(1e-12));
}

TEST_CASE("per-target thresholds inflate blocks independently") {
  Dataset data = generate(tiny_spec());
  ModelConfig model = tiny_model();
  TrainConfig cfg = tiny_train();
  cfg.epochs = 3;
  cfg.mode = TrainMode::Eto;
  cfg.clip = clip_from_dataset(data);
  TrainResult res = train(data, model, cfg);

  ThresholdSet ts = calibrate_on(res.params, data, 0.25, false, true);
  REQUIRE(ts.per_target);
  CHECK(ts.price.m_cal == ts.shared.m_cal);

  const Sample& s = data.samples[data.test_idx[0]];
  QuantileForecast f = forward(res.params, s.window);
  if (std::isfinite(ts.price.q_star) && std::isfinite(ts.load.q_star)) {
    ForecastBoxes b = inflate_per_target(f, ts.price, ts.load, cfg.clip);
    CHECK(b.price.upper(0, 0) ==
          doctest::Approx(f.upper(0, 0) + ts.price.q_star));
    CHECK(b.load.upper(0, 0) ==
          doctest::Approx(f.upper(0, 3) + ts.load.q_star));
    // price errors dwarf load errors, so the load block must not inherit the
    // price threshold
    CHECK(ts.load.q_star <= ts.price.q_star);
  }
  EvalReport rep = evaluate(res.params, res.meta, ts, data, model, cfg);
  CHECK(rep.samples == static_cast<int>(data.test_idx.size()));
}

TEST_CASE("error paths") {
  Dataset data = generate(tiny_spec());
  ModelConfig model = tiny_model();
  TrainConfig cfg = tiny_train();

  Dataset no_test = data;
  no_test.test_idx.clear();
  TrainResult res = train(data, model, cfg);
  CHECK_THROWS_AS(evaluate(res.params, res.meta, res.threshold, no_test, model, cfg), Error);

  ConformalThreshold empty_thr;
  CHECK_THROWS_WITH_AS(evaluate(res.params, res.meta, empty_thr, data, model, cfg),
                       doctest::Contains("MissingThreshold"), Error);

  TrainConfig bad = cfg;
  bad.lambda = 1.5;
  CHECK_THROWS_AS(train(data, model, bad), Error);
}
