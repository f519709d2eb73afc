#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gridplan/io.hpp"
#include "gridplan/synth.hpp"

using namespace gridplan;

namespace {

ScenarioSpec small_spec() {
  ScenarioSpec spec;
  spec.n_buses = 3;
  spec.days = 10;
  spec.seed = 77;
  spec.history = 6;
  spec.horizon = 4;
  spec.stride = 5;
  return spec;
}

}  // namespace

TEST_CASE("generation is deterministic and physically sane") {
  ScenarioSpec spec = small_spec();
  Dataset a = generate(spec);
  Dataset b = generate(spec);
  CHECK(a.series.price == b.series.price);
  CHECK(a.series.weather == b.series.weather);
  REQUIRE(a.samples.size() == b.samples.size());
  CHECK(a.samples[3].window == b.samples[3].window);

  CHECK(a.series.price.minCoeff() >= 0.0);
  CHECK(a.series.price.maxCoeff() <= spec.price.base * spec.price.spike_mult * 4.0);
  for (size_t i = 0; i < a.series.bus_load.size(); ++i) {
    CHECK(a.series.bus_load[i].minCoeff() >= 0.0);
    CHECK(a.series.bus_load[i].maxCoeff() <= spec.load.base_total_kw);  // per-bus share cap
  }
  // balanced per-phase loads
  for (auto& bl : a.series.bus_load) {
    CHECK((bl.col(0) - bl.col(1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((bl.col(0) - bl.col(2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  // the transformer line is non-invertible, the others are invertible
  int transformers = 0;
  for (auto& l : a.network.lines) {
    if (l.is_transformer) {
      ++transformers;
      CHECK_FALSE(is_invertible(l.y_fwd, 1e-9));
    } else {
      CHECK(is_invertible(l.y_fwd, 1e-9));
    }
  }
  CHECK(transformers == 1);

  // windows have the documented features count
  CHECK(a.samples[0].window.size() == (3 + 4) * 6 + 1);
  CHECK(a.samples[0].truth.rows() == 4);
}

TEST_CASE("splits are time-disjoint") {
  Dataset d = generate(small_spec());
  CHECK(!d.train_idx.empty());
  CHECK(!d.cal_idx.empty());
  CHECK(!d.test_idx.empty());
  int train_end = static_cast<int>(0.6 * d.series.steps());
  int cal_end = static_cast<int>(0.8 * d.series.steps());
  for (int i : d.train_idx)
    CHECK(d.samples[i].t0 + d.spec.horizon <= train_end);
  for (int i : d.cal_idx) {
    CHECK(d.samples[i].t0 - d.spec.history >= train_end);
    CHECK(d.samples[i].t0 + d.spec.horizon <= cal_end);
  }
  for (int i : d.test_idx) CHECK(d.samples[i].t0 - d.spec.history >= cal_end);
}

TEST_CASE("doubling load noise scales residual variance by about four") {
  ScenarioSpec spec = small_spec();
  spec.days = 60;
  spec.load.noise_sigma = 0.02;
  Dataset a = generate(spec);
  spec.load.noise_sigma = 0.04;
  Dataset b = generate(spec);

  auto residual_var = [](const Dataset& d) {
    // variance around the daily profile of the aggregate load
    int steps = d.series.steps();
    int per_day = 24;
    Eigen::VectorXd agg(steps);
    for (int t = 0; t < steps; ++t) {
      double v = 0;
      for (auto& bl : d.series.bus_load) v += bl(t, 0);
      agg(t) = v;
    }
    Eigen::VectorXd prof = Eigen::VectorXd::Zero(per_day);
    for (int t = 0; t < steps; ++t) prof(t % per_day) += agg(t);
    prof /= steps / per_day;
    double var = 0;
    for (int t = 0; t < steps; ++t) {
      double r = agg(t) - prof(t % per_day);
      var += r * r;
    }
    return var / steps;
  };
  double ratio = residual_var(b) / residual_var(a);
  CHECK(ratio > 2.5);
  CHECK(ratio < 6.0);
}

TEST_CASE("network json round-trip") {
  Dataset d = generate(small_spec());
  std::string path = "/tmp/gridplan_net_test.json";
  save_network(path, d.network, 1000.0);
  double base = 0.0;
  Network back = load_network(path, &base);
  CHECK(base == 1000.0);
  REQUIRE(back.bus_count() == d.network.bus_count());
  REQUIRE(back.line_count() == d.network.line_count());
  for (int b = 0; b < back.bus_count(); ++b) {
    CHECK(back.buses[b].id == d.network.buses[b].id);
    CHECK(std::abs(back.buses[b].bess_cost - d.network.buses[b].bess_cost) < 1e-12);
    CHECK((back.buses[b].pv_scale - d.network.buses[b].pv_scale).cwiseAbs().maxCoeff() < 1e-12);
    for (int p = 0; p < 3; ++p)
      CHECK(std::abs(back.buses[b].s_max(p) - d.network.buses[b].s_max(p)) < 1e-12);
  }
  for (int l = 0; l < back.line_count(); ++l) {
    CHECK((back.lines[l].y_fwd - d.network.lines[l].y_fwd).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(back.lines[l].is_transformer == d.network.lines[l].is_transformer);
  }
}

TEST_CASE("network json validation failures") {
  Dataset d = generate(small_spec());
  std::string path = "/tmp/gridplan_net_bad.json";

  // cycle: duplicate a line
  Network cyc = d.network;
  cyc.lines.push_back(cyc.lines[0]);
  save_network(path, cyc, 1000.0);
  CHECK_THROWS_WITH_AS(load_network(path), doctest::Contains("CycleDetected"), Error);

  CHECK_THROWS_AS(load_network("/tmp/definitely_missing.json"), Error);

  std::ofstream bad(path);
  bad << "{ not json";
  bad.close();
  CHECK_THROWS_WITH_AS(load_network(path), doctest::Contains("ParseError"), Error);
}

TEST_CASE("timeseries csv round-trip and gap detection") {
  Dataset d = generate(small_spec());
  std::string path = "/tmp/gridplan_series_test.csv";
  save_timeseries(path, d.series);
  TimeSeries back = load_timeseries(path);
  CHECK(back.steps() == d.series.steps());
  CHECK(back.step_hours == d.series.step_hours);
  CHECK((back.price - d.series.price).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.weather - d.series.weather).cwiseAbs().maxCoeff() < 1e-12);
  for (size_t i = 0; i < back.bus_load.size(); ++i)
    CHECK((back.bus_load[i] - d.series.bus_load[i]).cwiseAbs().maxCoeff() < 1e-12);

  // inject a timestamp gap
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  in.close();
  lines.erase(lines.begin() + 5);
  std::ofstream out(path);
  for (auto& l : lines) out << l << "\n";
  out.close();
  CHECK_THROWS_WITH_AS(load_timeseries(path), doctest::Contains("gap"), Error);
}

TEST_CASE("timeseries csv missing column is named") {
  std::string path = "/tmp/gridplan_series_col.csv";
  std::ofstream out(path);
  out << "timestamp,price_a,price_b,price_c,windspeed,temperature,solar\n";
  out.close();
  CHECK_THROWS_WITH_AS(load_timeseries(path), doctest::Contains("humidity"), Error);
}

TEST_CASE("runconfig round-trip and path validation") {
  Dataset d = generate(small_spec());
  std::filesystem::create_directories("/tmp/gridplan_cfg");
  save_network("/tmp/gridplan_cfg/net.json", d.network, 1000.0);
  save_timeseries("/tmp/gridplan_cfg/series.csv", d.series);

  RunConfig cfg;
  cfg.network_path = "/tmp/gridplan_cfg/net.json";
  cfg.timeseries_path = "/tmp/gridplan_cfg/series.csv";
  cfg.out_dir = "/tmp/gridplan_cfg/out";
  cfg.model.horizon = 4;
  cfg.lambda = 0.75;
  cfg.model.mode = VoltageMode::Admittance;
  save_runconfig("/tmp/gridplan_cfg/run.cfg", cfg);
  RunConfig back = load_runconfig("/tmp/gridplan_cfg/run.cfg");
  CHECK(back.model.horizon == 4);
  CHECK(back.lambda == 0.75);
  CHECK(back.model.mode == VoltageMode::Admittance);

  std::ofstream bad("/tmp/gridplan_cfg/bad.cfg");
  bad << "network = nowhere.json\n";
  bad.close();
  CHECK_THROWS_WITH_AS(load_runconfig("/tmp/gridplan_cfg/bad.cfg"),
                       doctest::Contains("ValidationError"), Error);
}

TEST_CASE("weights recover generation shares") {
  Dataset d = generate(small_spec());
  Eigen::MatrixXd w = weights_from_series(d.network, d.series);
  for (int p = 0; p < 3; ++p) {
    double sum = 0.0;
    for (int b = 0; b < d.network.bus_count(); ++b) sum += w(b, p);
    CHECK(sum == doctest::Approx(1.0));
  }
  // close to the generator's target shares on average
  for (int b = 1; b < d.network.bus_count(); ++b)
    CHECK(std::abs(w(b, 0) - d.weights(b, 0)) < 0.05);
}

TEST_CASE("identical seeds give byte-identical files") {
  ScenarioSpec spec = small_spec();
  Dataset a = generate(spec);
  Dataset b = generate(spec);
  save_network("/tmp/gp_det_a.json", a.network, 1000.0);
  save_network("/tmp/gp_det_b.json", b.network, 1000.0);
  save_timeseries("/tmp/gp_det_a.csv", a.series);
  save_timeseries("/tmp/gp_det_b.csv", b.series);
  auto slurp = [](const char* path) {
    std::ifstream is(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  CHECK(slurp("/tmp/gp_det_a.json") == slurp("/tmp/gp_det_b.json"));
  CHECK(slurp("/tmp/gp_det_a.csv") == slurp("/tmp/gp_det_b.csv"));
  CHECK(!slurp("/tmp/gp_det_a.csv").empty());
}

TEST_CASE("threshold json round-trip including infinity") {
  ConformalThreshold thr;
  thr.alpha = 0.1;
  thr.q_star = 0.321;
  thr.m_cal = 42;
  save_threshold("/tmp/gridplan_thr.json", thr);
  ConformalThreshold back = load_threshold("/tmp/gridplan_thr.json");
  CHECK(back.q_star == thr.q_star);
  CHECK(back.m_cal == 42);

  thr.q_star = std::numeric_limits<double>::infinity();
  save_threshold("/tmp/gridplan_thr.json", thr);
  CHECK(std::isinf(load_threshold("/tmp/gridplan_thr.json").q_star));
}
