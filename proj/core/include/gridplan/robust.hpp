#pragma once

#include <vector>

#include "gridplan/constraints.hpp"
#include "gridplan/lp.hpp"
#include "gridplan/network.hpp"

namespace gridplan {

// Per-timestep axis-aligned interval set: rows are timesteps, columns the
// uncertain dimensions (three phases here).
struct BoxSet {
  Eigen::MatrixXd lower;
  Eigen::MatrixXd upper;

  int steps() const { return static_cast<int>(lower.rows()); }
  int dims() const { return static_cast<int>(lower.cols()); }
  void validate() const;
  static BoxSet degenerate(const Eigen::MatrixXd& point);
};

// Affine reparameterization of a box onto the unit cube:
// value = offset + scale .* h with h in [0,1].
struct BoxAffineMap {
  Eigen::MatrixXd offset;  // lower bounds
  Eigen::MatrixXd scale;   // upper - lower
  Eigen::MatrixXd apply(const Eigen::MatrixXd& h) const { return offset + scale.cwiseProduct(h); }
};

// Scaled simplex-style dominant set for the budgeted unit box
// {h in [0,1]^m : sum h_i <= k}: vertices beta e_i and beta (k/m) e with
// beta = min(k, m/k).
struct DominantSet {
  int m = 0;
  double k = 0.0;
  double beta = 0.0;
  std::vector<Eigen::VectorXd> vertices;  // m+1 of them
};

struct RobustInstance {
  Network network;
  ModelConfig config;
  BoxSet price_box;  // $ per unit energy, per phase per step
  BoxSet load_box;   // aggregate real demand, per phase per step, per-unit
  // Share of the aggregate demand served at each bus (rows = bus indices,
  // cols = phases). Nonnegative, each column sums to 1 over non-slack buses.
  Eigen::MatrixXd weights;
};

// Worst-case prices: the elementwise upper bounds.
std::vector<Eigen::Vector3d> worst_case_price(const BoxSet& price_box);

// Dominant single point of the load box (m=1, k=1 per dimension): the
// elementwise upper bounds.
std::vector<Eigen::Vector3d> dominant_load(const BoxSet& load_box);

BoxAffineMap normalize_box(const BoxSet& box);

DominantSet dominant_set(int m, double k);

struct SingleStageModel {
  StandardLP lp;
  VariableMap vmap;
  ParameterMap pmap;  // price-upper then load-upper parameters, step-major
  int epigraph_row = 0;  // inequality row index

  int price_param(int t, int p) const { return t * 3 + p; }
  int load_param(int t, int p) const { return horizon * 3 + t * 3 + p; }
  int horizon = 0;
};

// Assembles Model 18: min c^T x + eta over power flow, operational and DER
// constraints with worst-case prices in the epigraph row and the dominant
// load on the injection right-hand sides.
SingleStageModel build_single_stage(const RobustInstance& instance);

// Brute-force two-stage oracle for small instances: grids the (time-constant)
// load box with prices at their upper bounds, solves the inner dispatch LP
// per realization over an outer x grid around the single-stage optimum, and
// returns min over x of max over realizations.
// Throws OracleTooLarge when the enumeration budget is exceeded and
// ValidationError if the load box varies over time.
double brute_force_two_stage(const RobustInstance& instance, int grid_points_per_dim);

// Post-solve physical sanity of an optimal plan.
struct PhysicsReport {
  double power_balance = 0.0;   // max |sum_j s_j| component
  double soc_telescoping = 0.0; // max |SOC_t - sum_{k<t} dispatch_k|
  double soc_box = 0.0;         // max violation of [soc_min x, soc_max x]
  double voltage_box = 0.0;     // max violation of [v_min, v_max]
  double dispatch_box = 0.0;    // max violation of [sd_min, sd_max]
  double max() const;
};

PhysicsReport check_physics(const RobustInstance& instance, const SingleStageModel& model,
                            const SolveResult& result);

}  // namespace gridplan
