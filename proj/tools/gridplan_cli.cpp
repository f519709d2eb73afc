// gridplan: robust battery siting/sizing and dispatch planning on three-phase
// radial feeders, with a decision-focused forecaster and split conformal
// calibration.
//
// Subcommands: gen, solve, train, calibrate, evaluate, export-lp, export-plot.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "gridplan/io.hpp"
#include "gridplan/ipm.hpp"
#include "gridplan/robust.hpp"
#include "gridplan/sensitivity.hpp"
#include "gridplan/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace gridplan;
using nlohmann::json;

namespace {

struct LoadedProblem {
  RunConfig cfg;
  Dataset data;  // network + series + samples + splits
};

LoadedProblem load_problem(const std::string& config_path) {
  LoadedProblem lp;
  lp.cfg = load_runconfig(config_path);
  if (lp.cfg.network_path.empty() || lp.cfg.timeseries_path.empty()) {
    throw Error(ErrorKind::ValidationError, "config must set network and timeseries");
  }
  double base = 0.0;
  lp.data.network = load_network(lp.cfg.network_path, &base);
  if (std::abs(base - lp.cfg.base_power_kw) > 1e-9) {
    throw Error(ErrorKind::ValidationError,
                "config base_power_kw differs from the network file base");
  }
  lp.data.series = load_timeseries(lp.cfg.timeseries_path);
  lp.data.weights = weights_from_series(lp.data.network, lp.data.series);
  lp.data.spec = lp.cfg.scenario(lp.data.series);
  lp.data.samples = make_samples(lp.data.series, lp.data.spec);
  if (lp.data.samples.empty()) {
    throw Error(ErrorKind::ValidationError, "series too short for any sample window");
  }
  split_samples(lp.data);
  return lp;
}

TrainConfig train_config(const LoadedProblem& p, const std::string& mode) {
  TrainConfig cfg;
  cfg.lambda = p.cfg.lambda;
  cfg.alpha = p.cfg.alpha;
  cfg.lr = p.cfg.lr;
  cfg.epochs = p.cfg.epochs;
  cfg.batch = p.cfg.batch;
  cfg.seed = p.cfg.seed;
  cfg.hidden = p.cfg.hidden;
  cfg.conformal_floor = p.cfg.conformal_floor_index;
  cfg.mode = mode == "eto" ? TrainMode::Eto : TrainMode::EndToEnd;
  cfg.clip = clip_from_dataset(p.data);
  return cfg;
}

void print_solution(const SingleStageModel& model, const SolveResult& r,
                    const Network& net, std::ostream& os) {
  os << std::setprecision(12);
  os << "objective " << r.objective << "\n";
  for (int b = 0; b < net.bus_count(); ++b) {
    if (!model.vmap.has_der(b)) continue;
    double x = r.x(model.vmap.x(b));
    os << "x[" << net.buses[b].id << "] " << x << (x > 1e-4 ? " installed" : "") << "\n";
  }
  int slack = net.slack_index();
  for (int t = 0; t < model.horizon; ++t) {
    os << "s0[" << t << "]";
    for (int p = 0; p < 3; ++p) os << " " << r.x(model.vmap.s_re(slack, t, p));
    os << "\n";
  }
}

int run_gen(const std::string& out_dir, int buses, int days, uint64_t seed) {
  ScenarioSpec spec;
  spec.n_buses = buses;
  spec.days = days;
  spec.seed = seed;
  Dataset data = generate(spec);
  fs::create_directories(out_dir);
  save_network(out_dir + "/net.json", data.network, spec.base_power_kw);
  save_timeseries(out_dir + "/series.csv", data.series);

  RunConfig cfg;
  cfg.network_path = out_dir + "/net.json";
  cfg.timeseries_path = out_dir + "/series.csv";
  cfg.out_dir = out_dir;
  cfg.seed = seed;
  cfg.base_power_kw = spec.base_power_kw;
  save_runconfig(out_dir + "/run.cfg", cfg);
  std::cout << "wrote " << out_dir << "/net.json, series.csv, run.cfg\n";
  return 0;
}

// Boxes for a one-shot solve: explicit file or the truth at the window.
SolveBoxes boxes_for_solve(const LoadedProblem& p, const std::string& boxes_path,
                           const Sample& sample) {
  if (!boxes_path.empty()) return load_boxes(boxes_path, p.data.spec);
  SolveBoxes out;
  out.price = BoxSet::degenerate(sample.truth.leftCols(3));
  out.load = BoxSet::degenerate(sample.truth.rightCols(3));
  return out;
}

int run_solve(const std::string& config_path, const std::string& boxes_path, int window,
              bool dump_lp_only, const std::string& out_dir_flag) {
  LoadedProblem p = load_problem(config_path);
  if (window < 0 || window >= static_cast<int>(p.data.samples.size())) {
    throw Error(ErrorKind::ValidationError,
                "window index out of range (have " +
                    std::to_string(p.data.samples.size()) + " samples)");
  }
  const Sample& sample = p.data.samples[window];
  SolveBoxes boxes = boxes_for_solve(p, boxes_path, sample);
  InstanceTemplate tmpl = make_template(p.data, p.cfg.model);
  RobustInstance inst = make_instance(tmpl, boxes.price, boxes.load, sample.t0);
  SingleStageModel model = build_single_stage(inst);

  std::string out_dir = out_dir_flag.empty() ? p.cfg.out_dir : out_dir_flag;
  fs::create_directories(out_dir);
  if (dump_lp_only) {
    std::ofstream os(out_dir + "/model.lp");
    os << dump_lp(model.lp);
    std::cout << "wrote " << out_dir << "/model.lp\n";
    return 0;
  }
  SolveResult r = solve(model.lp, 1e-8, 200);
  if (r.status != SolveStatus::Optimal) {
    throw Error(ErrorKind::SolveFailed, std::string("solve ended ") +
                                            solve_status_name(r.status));
  }
  print_solution(model, r, inst.network, std::cout);
  std::ofstream os(out_dir + "/solution.txt");
  print_solution(model, r, inst.network, os);
  std::cout << "wrote " << out_dir << "/solution.txt\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& mode,
              const std::string& out_dir_flag, uint64_t seed_override) {
  LoadedProblem p = load_problem(config_path);
  TrainConfig cfg = train_config(p, mode);
  if (seed_override != 0) cfg.seed = seed_override;
  TrainResult res = train(p.data, p.cfg.model, cfg);
  std::string out_dir = out_dir_flag.empty() ? p.cfg.out_dir : out_dir_flag;
  fs::create_directories(out_dir);
  std::string ckpt = out_dir + "/checkpoint_" + mode + ".bin";
  save_checkpoint(ckpt, res.params, res.meta);
  save_threshold(out_dir + "/threshold_" + mode + ".json", res.threshold);
  save_history_csv(out_dir + "/history_" + mode + ".csv", res.history);
  std::cout << "trained " << mode << ": " << ckpt << "\n";
  if (!res.history.empty()) {
    const HistoryRow& last = res.history.back();
    std::cout << "final epoch pred=" << last.pred_loss << " task=" << last.task_loss
              << " coverage=" << last.coverage << "\n";
  }
  return 0;
}

int run_calibrate(const std::string& config_path, const std::string& ckpt_path,
                  double alpha_flag, bool per_target, const std::string& out_dir_flag) {
  LoadedProblem p = load_problem(config_path);
  CheckpointMeta meta;
  LstmParams params = load_checkpoint(ckpt_path, &meta);
  double alpha = alpha_flag > 0 ? alpha_flag : meta.alpha;
  ThresholdSet thr =
      calibrate_on(params, p.data, alpha, p.cfg.conformal_floor_index, per_target);
  std::string out_dir = out_dir_flag.empty() ? p.cfg.out_dir : out_dir_flag;
  fs::create_directories(out_dir);
  save_threshold(out_dir + "/threshold.json", thr.shared);
  std::cout << "alpha " << thr.shared.alpha << " q_star " << thr.shared.q_star
            << " m_cal " << thr.shared.m_cal << "\n";
  if (per_target) {
    save_threshold(out_dir + "/threshold_price.json", thr.price);
    save_threshold(out_dir + "/threshold_load.json", thr.load);
    std::cout << "per-target q_star: price " << thr.price.q_star << " load "
              << thr.load.q_star << "\n";
  }
  std::cout << "wrote " << out_dir << "/threshold.json\n";
  return 0;
}

int run_evaluate(const std::string& config_path, const std::string& ckpt_path,
                 const std::string& thr_path, double alpha_flag, bool per_target,
                 const std::string& out_dir_flag) {
  LoadedProblem p = load_problem(config_path);
  CheckpointMeta meta;
  LstmParams params = load_checkpoint(ckpt_path, &meta);
  TrainConfig cfg = train_config(p, meta.mode);
  cfg.alpha = alpha_flag > 0 ? alpha_flag : meta.alpha;

  ThresholdSet thr;
  if (!thr_path.empty() && !per_target) {
    thr = ThresholdSet::from_shared(load_threshold(thr_path));
  } else {
    // per-target always recalibrates on the fly from the calibration split
    thr = calibrate_on(params, p.data, cfg.alpha, p.cfg.conformal_floor_index, per_target);
  }

  EvalReport rep = evaluate(params, meta, thr, p.data, p.cfg.model, cfg);
  std::string out_dir = out_dir_flag.empty() ? p.cfg.out_dir : out_dir_flag;
  fs::create_directories(out_dir);
  std::ofstream os(out_dir + "/eval.csv");
  os << std::setprecision(12);
  os << "task_loss,pred_loss,total_loss,total_weighted,coverage,solve_failures,samples\n";
  os << rep.task_loss << "," << rep.pred_loss << "," << rep.total_loss << ","
     << rep.total_weighted << "," << rep.coverage << "," << rep.solve_failures << ","
     << rep.samples << "\n";
  std::cout << std::setprecision(12);
  std::cout << "task_loss " << rep.task_loss << "\n"
            << "pred_loss " << rep.pred_loss << "\n"
            << "total_loss " << rep.total_loss << "\n"
            << "coverage " << rep.coverage << "\n"
            << "solve_failures " << rep.solve_failures << "/" << rep.samples << "\n";
  std::cout << "wrote " << out_dir << "/eval.csv\n";
  return 0;
}

int run_export_plot(const std::string& config_path, const std::string& ckpt_path,
                    const std::string& thr_path, int window,
                    const std::string& out_dir_flag) {
  LoadedProblem p = load_problem(config_path);
  CheckpointMeta meta;
  LstmParams params = load_checkpoint(ckpt_path, &meta);
  ConformalThreshold thr = load_threshold(thr_path);
  TrainConfig cfg = train_config(p, meta.mode);

  if (window < 0) window = p.data.test_idx.empty() ? 0 : p.data.test_idx.front();
  if (window >= static_cast<int>(p.data.samples.size())) {
    throw Error(ErrorKind::ValidationError, "window index out of range");
  }
  const Sample& s = p.data.samples[window];
  QuantileForecast f = forward(params, s.window);
  ForecastBoxes boxes = inflate(f, thr, cfg.clip);

  InstanceTemplate tmpl = make_template(p.data, p.cfg.model);
  RobustInstance inst = make_instance(tmpl, boxes.price, boxes.load, s.t0);
  SingleStageModel model = build_single_stage(inst);
  SolveResult r = solve(model.lp, 1e-8, 200);
  bool solved = r.status == SolveStatus::Optimal;

  // Slack real power per step: solved dispatch plus the forecast band and
  // truth mapped through the lossless balance (loads minus PV).
  std::string out_dir = out_dir_flag.empty() ? p.cfg.out_dir : out_dir_flag;
  fs::create_directories(out_dir);
  std::ofstream os(out_dir + "/plot.csv");
  os << std::setprecision(12);
  os << "step,slack_p_solved,band_lower,band_upper,truth\n";
  int slack = inst.network.slack_index();
  for (int t = 0; t < p.cfg.model.horizon; ++t) {
    double pv = 0.0;
    for (int b = 0; b < inst.network.bus_count(); ++b) {
      if (inst.network.buses[b].kind == BusKind::Slack) continue;
      if (!inst.network.buses[b].pv_profile.empty())
        for (int ph = 0; ph < 3; ++ph)
          pv += inst.network.buses[b].pv_profile[t](ph).real();
    }
    double sol = 0.0;
    if (solved)
      for (int ph = 0; ph < 3; ++ph) sol += r.x(model.vmap.s_re(slack, t, ph));
    double lo = boxes.load.lower.row(t).sum() - pv;
    double hi = boxes.load.upper.row(t).sum() - pv;
    double truth = s.truth.row(t).tail(3).sum() - pv;
    os << t << "," << (solved ? sol : std::nan("")) << "," << lo << "," << hi << ","
       << truth << "\n";
  }
  std::cout << "wrote " << out_dir << "/plot.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"battery siting/sizing and dispatch planning on three-phase feeders"};
  app.require_subcommand(1);

  std::string config, boxes, ckpt, thr, out_dir;
  std::string mode = "end_to_end";
  int window = -1;
  int buses = 8, days = 120;
  uint64_t seed = 42;  // gen default; elsewhere 0 means keep-config
  double alpha = -1.0;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic scenario");
  gen->add_option("--out-dir", out_dir, "output directory")->required();
  gen->add_option("--buses", buses, "non-slack bus count");
  gen->add_option("--days", days, "days of hourly data");
  gen->add_option("--seed", seed, "random seed");

  CLI::App* solve_cmd = app.add_subcommand("solve", "one-shot plan from explicit boxes");
  solve_cmd->add_option("--config", config, "run config file")->required();
  solve_cmd->add_option("--boxes", boxes, "boxes json (defaults to the window truth)");
  solve_cmd->add_option("--window", window, "sample window index")->default_val(0);
  solve_cmd->add_option("--out-dir", out_dir, "output directory override");

  CLI::App* train_cmd = app.add_subcommand("train", "train the forecaster");
  train_cmd->add_option("--config", config, "run config file")->required();
  train_cmd->add_option("--mode", mode, "end_to_end or eto")
      ->check(CLI::IsMember({"end_to_end", "eto"}));
  train_cmd->add_option("--seed", seed, "seed override (0 keeps the config seed)")
      ->default_val(0);
  train_cmd->add_option("--out-dir", out_dir, "output directory override");

  bool per_target = false;
  CLI::App* cal = app.add_subcommand("calibrate", "split-conformal threshold");
  cal->add_option("--config", config, "run config file")->required();
  cal->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  cal->add_option("--alpha", alpha, "coverage level override");
  cal->add_flag("--per-target", per_target, "separate price/load thresholds");
  cal->add_option("--out-dir", out_dir, "output directory override");

  CLI::App* ev = app.add_subcommand("evaluate", "test-set report");
  ev->add_option("--config", config, "run config file")->required();
  ev->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  ev->add_option("--threshold", thr, "threshold json (else calibrate on the fly)");
  ev->add_option("--alpha", alpha, "coverage level override");
  ev->add_flag("--per-target", per_target, "separate price/load thresholds");
  ev->add_option("--out-dir", out_dir, "output directory override");

  CLI::App* lp = app.add_subcommand("export-lp", "dump the assembled model");
  lp->add_option("--config", config, "run config file")->required();
  lp->add_option("--boxes", boxes, "boxes json (defaults to the window truth)");
  lp->add_option("--window", window, "sample window index")->default_val(0);
  lp->add_option("--out-dir", out_dir, "output directory override");

  CLI::App* plot = app.add_subcommand("export-plot", "slack power band vs truth");
  plot->add_option("--config", config, "run config file")->required();
  plot->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  plot->add_option("--threshold", thr, "threshold json")->required();
  plot->add_option("--window", window, "sample window index (default first test window)");
  plot->add_option("--out-dir", out_dir, "output directory override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen(out_dir, buses, days, seed);
    if (solve_cmd->parsed()) return run_solve(config, boxes, window, false, out_dir);
    if (train_cmd->parsed()) return run_train(config, mode, out_dir, seed);
    if (cal->parsed()) return run_calibrate(config, ckpt, alpha, per_target, out_dir);
    if (ev->parsed()) return run_evaluate(config, ckpt, thr, alpha, per_target, out_dir);
    if (lp->parsed()) return run_solve(config, boxes, window, true, out_dir);
    if (plot->parsed()) return run_export_plot(config, ckpt, thr, window, out_dir);
  } catch (const Error& e) {
    json err = {{"error", error_kind_name(e.kind())}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    if (e.kind() == ErrorKind::ParseError) return 2;
    if (e.kind() == ErrorKind::ValidationError) return 3;
    return 1;
  } catch (const std::exception& e) {
    json err = {{"error", "Internal"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
