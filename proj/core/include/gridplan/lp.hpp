#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <string>
#include <vector>

namespace gridplan {

// Standard-form LP:
//   min  c^T x + const
//   s.t. eq_A x  = eq_b
//        in_A x <= in_b
//        lower <= x <= upper   (+-inf allowed)
struct StandardLP {
  int num_vars = 0;
  Eigen::VectorXd c;
  double c0 = 0.0;
  Eigen::SparseMatrix<double> eq_A;
  Eigen::VectorXd eq_b;
  Eigen::SparseMatrix<double> in_A;
  Eigen::VectorXd in_b;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<std::string> eq_labels;
  std::vector<std::string> in_labels;

  int num_eq() const { return static_cast<int>(eq_b.size()); }
  int num_in() const { return static_cast<int>(in_b.size()); }
};

enum class SolveStatus { Optimal, PrimalInfeasible, DualInfeasible, IterationLimit };

const char* solve_status_name(SolveStatus s);

struct KktResiduals {
  double stationarity = 0.0;
  double primal_feasibility = 0.0;
  double dual_feasibility = 0.0;
  double complementarity = 0.0;
  double max() const;
};

// Dual sign convention, fixed throughout:
//   L(x, y, mu, wl, wu) = c^T x + y^T (eq_A x - eq_b) + mu^T (in_A x - in_b)
//                         - wl^T (x - lower) + wu^T (x - upper)
// with mu, wl, wu >= 0. Consequently at the optimum
//   dz*/d eq_b_i = -y_i,   dz*/d in_b_i = -mu_i,
//   dz*/d in_A(r,c) = mu_r x_c,   dz*/d eq_A(r,c) = y_r x_c.
struct SolveResult {
  SolveStatus status = SolveStatus::IterationLimit;
  Eigen::VectorXd x;
  Eigen::VectorXd eq_duals;     // y, free sign
  Eigen::VectorXd ineq_duals;   // mu >= 0
  Eigen::VectorXd lower_duals;  // wl >= 0
  Eigen::VectorXd upper_duals;  // wu >= 0
  double objective = 0.0;
  KktResiduals residuals;
  int iterations = 0;
  // Smallest strict-complementarity margin over inequality rows and active
  // bounds; near-zero values mean dual degeneracy.
  double complementarity_margin = 0.0;
  // Per-iteration (primal obj, dual obj, primal infeas, dual infeas, mu) of
  // the scaled iterate, for diagnostics and invariant checks.
  std::vector<std::array<double, 5>> trace;
};

// Where a scalar model parameter lands in the LP. A parameter may touch
// several entries (e.g. one forecast bound fans out over per-bus rows).
struct ParameterEntry {
  enum class Target { EqRhs, InRhs, EqCoef, InCoef };
  Target target = Target::EqRhs;
  int row = 0;
  int col = 0;       // used by *Coef targets
  double weight = 1.0;  // d(entry)/d(parameter)
};

struct ParameterMap {
  std::vector<std::string> names;
  std::vector<std::vector<ParameterEntry>> entries;  // parallel to names

  int add(const std::string& name) {
    names.push_back(name);
    entries.emplace_back();
    return static_cast<int>(names.size()) - 1;
  }
  int size() const { return static_cast<int>(names.size()); }
};

// One row per constraint: "<label> <=|= <rhs> : col:coef col:coef ...".
std::string dump_lp(const StandardLP& lp);

}  // namespace gridplan
