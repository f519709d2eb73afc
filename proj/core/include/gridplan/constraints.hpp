#pragma once

#include <array>
#include <string>
#include <vector>

#include "gridplan/lp.hpp"
#include "gridplan/network.hpp"

namespace gridplan {

enum class VoltageMode { Impedance, Admittance, Auto };

struct ModelConfig {
  int horizon = 24;          // number of steps tau+1
  double soc_min = 0.0;      // SOC bounds as multipliers of x_j; 0 means a
                             // battery cannot discharge energy it never stored
  double soc_max = 1.0;
  double sd_min = -0.5;      // per-phase real dispatch bounds, per-unit
  double sd_max = 0.5;
  double loss_weight = 0.8;  // reserved for training
  VoltageMode mode = VoltageMode::Auto;
  double x_max = 10.0;       // installed-size cap, per-unit
  double slack_vref = 1.0;   // slack squared-voltage reference, per-unit^2
  double invertibility_tol = 1e-9;
};

// Column layout over the decision variables of the single-stage model.
// Dispatch, SOC and size columns exist for non-slack buses only; injections
// and squared voltages cover every bus.
class VariableMap {
 public:
  VariableMap() = default;
  VariableMap(const Network& net, int horizon);

  int num_cols() const { return num_cols_; }
  int horizon() const { return horizon_; }
  int num_buses() const { return nb_; }

  // b is a bus index into Network::buses, t a timestep, p a phase 0..2.
  int x(int b) const;                 // BESS size
  int eta() const { return eta_; }    // worst-case cost epigraph
  int s_re(int b, int t, int p) const;
  int s_im(int b, int t, int p) const;
  int sd_re(int b, int t, int p) const;  // real BESS dispatch
  int vc(int b, int t) const;            // balanced squared-voltage scalar
  int soc(int b, int t, int p) const;    // t in 0..horizon (terminal state included)
  int lam_re(int l, int t, int p) const;  // subtree flow of line l, downhill
  int lam_im(int l, int t, int p) const;

  bool has_der(int b) const { return der_slot_[b] >= 0; }
  std::string name(int col) const;  // human-readable column owner

 private:
  int nb_ = 0, nl_ = 0, horizon_ = 0, num_cols_ = 0, n_der_ = 0;
  int eta_ = 0;
  int x_base_ = 0, s_base_ = 0, sd_base_ = 0, vc_base_ = 0, soc_base_ = 0, lam_base_ = 0;
  std::vector<int> der_slot_;  // bus index -> dense non-slack slot or -1
  std::vector<int> bus_ids_;
};

struct ConstraintRow {
  std::vector<std::pair<int, double>> terms;  // (column, coefficient)
  char relation = '=';                        // '=' or '<'
  double rhs = 0.0;
  std::string label;                          // source equation tag
};

struct LinearConstraintSystem {
  std::vector<ConstraintRow> rows;
  void append(std::vector<ConstraintRow>&& more);
};

// Affine complex expression over real LP columns.
struct ComplexAffine {
  std::vector<std::pair<int, cplx>> terms;
  cplx constant{0.0, 0.0};
};
using AffinePhases = std::array<ComplexAffine, 3>;          // per-phase vector
using AffineMatrix = std::array<std::array<ComplexAffine, 3>, 3>;

// lambda_ij for the line into bus j: minus the injection sum over the
// subtree rooted at j (including j), substituted inline over the s columns.
// The assembled system instead uses the dedicated lambda columns (see
// assemble_flow_definitions); this expression is their closed form and the
// reference for tests.
AffinePhases subtree_flow_expr(const Network& net, const RootedTree& tree,
                               const VariableMap& vm, int line_index, int t);

// Recursive definition rows tying the lambda columns to the injections:
//   lambda_l + s_child + sum_{m into children of child} (-lambda_m) = 0
// per phase, real and imaginary. Six sparse rows per line.
std::vector<ConstraintRow> assemble_flow_definitions(const Network& net,
                                                     const RootedTree& tree,
                                                     const VariableMap& vm, int t);

// S_ij = gamma * diag(lambda): S(p,q) = gamma(p,q) * lambda_q.
AffineMatrix flow_matrix_expr(const AffinePhases& lambda);

// Power balance: sum_j s_j^t = 0, six real rows per step.
std::vector<ConstraintRow> assemble_power_balance(const Network& net,
                                                  const VariableMap& vm, int t);

// Path-form voltage drop v_0 - v_j = sum over P_j of (z S^H + S z^H) with
// v = v^c A. Nine real rows per non-slack bus plus the slack reference row.
// Throws SingularImpedance when a path line fails is_invertible.
std::vector<ConstraintRow> assemble_voltage_impedance(const Network& net,
                                                      const RootedTree& tree,
                                                      const VariableMap& vm,
                                                      const ModelConfig& cfg, int t);

// Admittance-form relation per line, both directions:
//   y (v_j - v_k) y^H = S^H y^H + y S
// with v = v^c A. Works for singular y; 18 real rows per line.
std::vector<ConstraintRow> assemble_voltage_admittance(const Network& net,
                                                       const RootedTree& tree,
                                                       const VariableMap& vm,
                                                       const ModelConfig& cfg, int t);

// Mixed per-line selection: impedance form for invertible lines, admittance
// form otherwise, plus the slack reference row.
std::vector<ConstraintRow> assemble_voltage_auto(const Network& net,
                                                 const RootedTree& tree,
                                                 const VariableMap& vm,
                                                 const ModelConfig& cfg, int t);

// Injection and voltage boxes plus optional per-line real flow caps.
std::vector<ConstraintRow> assemble_operational_bounds(const Network& net,
                                                       const RootedTree& tree,
                                                       const VariableMap& vm, int t);

// DER coupling over the whole horizon: injection composition, dispatch
// bounds, SOC recursion/initial condition and size-proportional SOC box.
// load_rhs[b][t] is the signed real load at bus index b (demand negative).
std::vector<ConstraintRow> assemble_der(
    const Network& net, const VariableMap& vm, const ModelConfig& cfg,
    const std::vector<std::vector<Eigen::Vector3d>>& load_rhs);

struct ObjectiveParts {
  Eigen::VectorXd c;             // size vm.num_cols()
  ConstraintRow epigraph;        // eta >= sum_t price_t . Re(s_0^t)
};

// min c^T x + eta with one epigraph row over the horizon.
ObjectiveParts assemble_objective(const Network& net, const VariableMap& vm,
                                  const std::vector<Eigen::Vector3d>& price_upper);

// Collects rows into a StandardLP; single-variable bounds stay rows here,
// the solver tightens them internally.
StandardLP rows_to_lp(const LinearConstraintSystem& sys, int num_cols,
                      const Eigen::VectorXd& objective, double objective_const,
                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

}  // namespace gridplan
