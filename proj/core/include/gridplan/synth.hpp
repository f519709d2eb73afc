#pragma once

#include <string>
#include <vector>

#include "gridplan/network.hpp"

namespace gridplan {

struct WeatherParams {
  double temp_mean = 18.0, temp_amp = 8.0, temp_noise = 0.8;   // deg C
  double wind_mean = 5.0, wind_amp = 2.0, wind_noise = 0.8;    // m/s
  double humid_mean = 55.0, humid_amp = 12.0, humid_noise = 2.0;  // %
  double solar_noise = 0.05;  // relative, on the clear-sky shape
};

struct LoadParams {
  double base_total_kw = 900.0;   // aggregate mean over all buses
  double daily_amp = 0.35;        // relative daily swing
  double temp_coupling = 0.015;   // relative per deg C above the mean
  double noise_sigma = 0.03;      // relative
};

struct PriceParams {
  double base = 0.06;          // $/kWh
  double temp_coeff = 0.012;   // relative per deg C above the mean
  double load_coeff = 0.6;     // relative per unit of relative load deviation
  double noise_sigma = 0.003;  // $/kWh
  double spike_prob = 0.05;    // per hour
  double spike_mult = 3.0;
};

struct ScenarioSpec {
  int n_buses = 8;  // non-slack buses; the slack is added as bus 0
  int days = 120;
  double step_hours = 1.0;
  uint64_t seed = 42;
  int history = 24;   // M
  int horizon = 24;   // tau+1
  int stride = 12;    // steps between consecutive sample windows
  double base_power_kw = 1000.0;
  double pv_fraction = 0.25;  // PV capacity relative to the bus load share
  double bess_cost_lo = 8.0, bess_cost_hi = 16.0;  // $ per pu*h of size
  WeatherParams weather;
  LoadParams load;
  PriceParams price;
};

// Physical-unit series as written to / read from CSV. Loads kW per phase,
// prices $/kWh, weather columns (windspeed, temperature, humidity, solar).
struct TimeSeries {
  std::string start_iso = "2024-01-01T00:00:00";
  double step_hours = 1.0;
  Eigen::MatrixXd price;                  // steps x 3
  Eigen::MatrixXd weather;                // steps x 4
  std::vector<Eigen::MatrixXd> bus_load;  // per non-slack bus: steps x 3
  std::vector<int> bus_ids;               // parallel to bus_load

  int steps() const { return static_cast<int>(price.rows()); }
};

// One training sample: flattened feature window (per-unit loads, raw weather,
// price scalar) and the (price, aggregate load) truth over the horizon in
// internal units ($ per pu-step, pu).
struct Sample {
  Eigen::VectorXd window;
  Eigen::MatrixXd truth;  // horizon x 6
  int t0 = 0;             // first forecast step in the series
};

struct Dataset {
  Network network;          // per-unit
  TimeSeries series;        // physical units
  Eigen::MatrixXd weights;  // |buses| x 3 disaggregation shares
  std::vector<Sample> samples;
  std::vector<int> train_idx, cal_idx, test_idx;  // time-disjoint splits
  ScenarioSpec spec;
};

// Deterministic synthetic scenario: radial chain with one non-invertible
// transformer line, balanced per-phase loads, sinusoidal weather, and prices
// affine in temperature and aggregate load with occasional spikes.
Dataset generate(const ScenarioSpec& spec);

// Feature/truth extraction shared with the CSV ingestion path.
std::vector<Sample> make_samples(const TimeSeries& series, const ScenarioSpec& spec);
void split_samples(Dataset& data);

// Per-unit conversion helpers (single normalization boundary).
double price_to_internal(double dollars_per_kwh, const ScenarioSpec& spec);
double load_to_internal(double kw, const ScenarioSpec& spec);

// PV real-power profile for the horizon starting at step t0, per-unit.
std::vector<Complex3> pv_profile_for(const Network& net, int bus_index,
                                     const TimeSeries& series, const ScenarioSpec& spec,
                                     int t0);

}  // namespace gridplan
