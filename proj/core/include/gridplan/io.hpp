#pragma once

#include <optional>
#include <string>

#include "gridplan/conformal.hpp"
#include "gridplan/constraints.hpp"
#include "gridplan/network.hpp"
#include "gridplan/synth.hpp"

namespace gridplan {

// Network JSON: base quantities plus buses/lines. Power bounds, PV capacity
// and storage cost are stored in physical units (kW, $/kWh); admittances are
// per-unit 3x3 complex blocks. Conversion to per-unit happens here, once.
void save_network(const std::string& path, const Network& net, double base_power_kw,
                  double base_voltage_kv = 12.47);
Network load_network(const std::string& path, double* base_power_kw = nullptr,
                     double* base_voltage_kv = nullptr);

// Timeseries CSV with the fixed header
//   timestamp,price_a,price_b,price_c,windspeed,temperature,humidity,solar,
//   load_bus<k>_a,load_bus<k>_b,load_bus<k>_c ...
// Timestamps must be ISO-8601, strictly increasing with a constant step.
void save_timeseries(const std::string& path, const TimeSeries& series);
TimeSeries load_timeseries(const std::string& path);

// Long-run per-bus share of the aggregate demand, used to disaggregate the
// forecast over buses.
Eigen::MatrixXd weights_from_series(const Network& net, const TimeSeries& series);

struct RunConfig {
  std::string network_path;
  std::string timeseries_path;
  std::string out_dir = "out";
  ModelConfig model;
  double base_power_kw = 1000.0;
  int history = 24;
  int stride = 12;
  int hidden = 64;
  double lambda = 0.8;
  double alpha = 0.1;
  double lr = 3e-3;
  int epochs = 6;
  int batch = 8;
  uint64_t seed = 42;
  bool conformal_floor_index = false;
  double price_cap = 0.6;  // $/kWh clip for infinite thresholds
  double load_cap_factor = 3.0;  // times the historical max aggregate load

  ScenarioSpec scenario(const TimeSeries& series) const;
};

// "key = value" lines, '#' comments. Paths are validated to exist.
RunConfig load_runconfig(const std::string& path);
void save_runconfig(const std::string& path, const RunConfig& cfg);

void save_threshold(const std::string& path, const ConformalThreshold& thr);
ConformalThreshold load_threshold(const std::string& path);

// Explicit uncertainty boxes for one-shot solves, physical units in the file
// ($/kWh, kW aggregate), internal units in memory.
struct SolveBoxes {
  BoxSet price;
  BoxSet load;
};
SolveBoxes load_boxes(const std::string& path, const ScenarioSpec& spec);
void save_boxes(const std::string& path, const SolveBoxes& boxes, const ScenarioSpec& spec);

}  // namespace gridplan
