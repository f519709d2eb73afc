#include <benchmark/benchmark.h>

#include "gridplan/ipm.hpp"
#include "gridplan/rng.hpp"
#include "gridplan/robust.hpp"
#include "gridplan/sensitivity.hpp"
#include "gridplan/training.hpp"

using namespace gridplan;

namespace {

Dataset& default_data() {
  static Dataset data = [] {
    ScenarioSpec spec;
    spec.days = 30;
    return generate(spec);
  }();
  return data;
}

RobustInstance default_instance(int horizon) {
  Dataset& data = default_data();
  ModelConfig model;
  model.horizon = horizon;
  InstanceTemplate tmpl = make_template(data, model);
  const Sample& s = data.samples[data.train_idx[0]];
  Eigen::MatrixXd price = s.truth.leftCols(3).topRows(horizon);
  Eigen::MatrixXd load = s.truth.rightCols(3).topRows(horizon);
  return make_instance(tmpl, BoxSet::degenerate(price), BoxSet::degenerate(load), s.t0);
}

}  // namespace

static void BM_Assembly(benchmark::State& state) {
  RobustInstance inst = default_instance(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    SingleStageModel m = build_single_stage(inst);
    benchmark::DoNotOptimize(m.lp.eq_A.nonZeros());
  }
}
BENCHMARK(BM_Assembly)->Arg(6)->Arg(24)->Unit(benchmark::kMillisecond);

static void BM_Solve(benchmark::State& state) {
  RobustInstance inst = default_instance(static_cast<int>(state.range(0)));
  SingleStageModel m = build_single_stage(inst);
  for (auto _ : state) {
    SolveResult r = solve(m.lp, 1e-8, 200);
    benchmark::DoNotOptimize(r.objective);
  }
}
BENCHMARK(BM_Solve)->Arg(6)->Arg(12)->Arg(24)->Unit(benchmark::kMillisecond);

static void BM_ValueGradient(benchmark::State& state) {
  RobustInstance inst = default_instance(24);
  SingleStageModel m = build_single_stage(inst);
  SolveResult r = solve(m.lp, 1e-8, 200);
  for (auto _ : state) {
    GradientResult g = value_gradient(r, m.pmap, m.lp);
    benchmark::DoNotOptimize(g.gradient.sum());
  }
}
BENCHMARK(BM_ValueGradient)->Unit(benchmark::kMicrosecond);

static void BM_LstmForward(benchmark::State& state) {
  LstmDims dims;
  dims.n_buses = 8;
  dims.history = 24;
  dims.hidden = static_cast<int>(state.range(0));
  dims.horizon = 24;
  LstmParams params = LstmParams::init(dims, 1);
  Rng rng(2);
  Eigen::VectorXd w(dims.window_size());
  for (int i = 0; i < w.size(); ++i) w(i) = rng.uniform(-1, 1);
  for (auto _ : state) {
    QuantileForecast f = forward(params, w);
    benchmark::DoNotOptimize(f.upper.sum());
  }
}
BENCHMARK(BM_LstmForward)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

static void BM_LstmBackward(benchmark::State& state) {
  LstmDims dims;
  dims.n_buses = 8;
  dims.history = 24;
  dims.hidden = static_cast<int>(state.range(0));
  dims.horizon = 24;
  LstmParams params = LstmParams::init(dims, 1);
  Rng rng(2);
  Eigen::VectorXd w(dims.window_size());
  for (int i = 0; i < w.size(); ++i) w(i) = rng.uniform(-1, 1);
  Eigen::MatrixXd dl = Eigen::MatrixXd::Constant(24, 6, 0.1);
  Eigen::MatrixXd du = Eigen::MatrixXd::Constant(24, 6, -0.1);
  LstmCache cache;
  forward(params, w, &cache);
  for (auto _ : state) {
    LstmGrads g = backward(params, w, cache, dl, du);
    benchmark::DoNotOptimize(g.squared_norm());
  }
}
BENCHMARK(BM_LstmBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

static void BM_SynthGenerate(benchmark::State& state) {
  for (auto _ : state) {
    ScenarioSpec spec;
    spec.days = static_cast<int>(state.range(0));
    Dataset d = generate(spec);
    benchmark::DoNotOptimize(d.samples.size());
  }
}
BENCHMARK(BM_SynthGenerate)->Arg(30)->Arg(120)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
