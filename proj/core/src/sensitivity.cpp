#include "gridplan/sensitivity.hpp"

#include <cmath>
#include <limits>

#include "gridplan/errors.hpp"

namespace gridplan {

KktResiduals verify_kkt(const StandardLP& lp, const SolveResult& result) {
  KktResiduals res;
  const Eigen::VectorXd& x = result.x;

  // Stationarity: c + eq_A^T y + in_A^T mu - wl + wu = 0.
  Eigen::VectorXd stat = lp.c;
  if (lp.num_eq()) stat += lp.eq_A.transpose() * result.eq_duals;
  if (lp.num_in()) stat += lp.in_A.transpose() * result.ineq_duals;
  if (result.lower_duals.size()) stat -= result.lower_duals;
  if (result.upper_duals.size()) stat += result.upper_duals;
  res.stationarity = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;

  double pf = 0.0;
  if (lp.num_eq()) pf = (lp.eq_A * x - lp.eq_b).cwiseAbs().maxCoeff();
  Eigen::VectorXd slack;
  if (lp.num_in()) {
    slack = lp.in_b - lp.in_A * x;
    pf = std::max(pf, std::max(0.0, -slack.minCoeff()));
  }
  for (int j = 0; j < lp.num_vars; ++j) {
    if (lp.lower.size() && std::isfinite(lp.lower(j)))
      pf = std::max(pf, lp.lower(j) - x(j));
    if (lp.upper.size() && std::isfinite(lp.upper(j)))
      pf = std::max(pf, x(j) - lp.upper(j));
  }
  res.primal_feasibility = std::max(0.0, pf);

  double df = 0.0;
  if (result.ineq_duals.size()) df = std::max(df, -result.ineq_duals.minCoeff());
  if (result.lower_duals.size()) df = std::max(df, -result.lower_duals.minCoeff());
  if (result.upper_duals.size()) df = std::max(df, -result.upper_duals.minCoeff());
  res.dual_feasibility = std::max(0.0, df);

  double comp = 0.0;
  if (lp.num_in())
    for (int r = 0; r < lp.num_in(); ++r)
      comp = std::max(comp, std::abs(result.ineq_duals(r) * slack(r)));
  for (int j = 0; j < lp.num_vars; ++j) {
    if (lp.lower.size() && std::isfinite(lp.lower(j)) && result.lower_duals.size())
      comp = std::max(comp, std::abs(result.lower_duals(j) * (x(j) - lp.lower(j))));
    if (lp.upper.size() && std::isfinite(lp.upper(j)) && result.upper_duals.size())
      comp = std::max(comp, std::abs(result.upper_duals(j) * (lp.upper(j) - x(j))));
  }
  res.complementarity = comp;
  return res;
}

GradientResult value_gradient(const SolveResult& result, const ParameterMap& pmap,
                              const StandardLP& lp, double degeneracy_tol) {
  if (result.status != SolveStatus::Optimal) {
    throw Error(ErrorKind::NotOptimal,
                std::string("value_gradient requires an optimal result, got ") +
                    solve_status_name(result.status));
  }
  GradientResult out;
  out.margin = result.complementarity_margin;
  out.degenerate = result.complementarity_margin < degeneracy_tol;
  out.gradient = Eigen::VectorXd::Zero(pmap.size());

  for (int p = 0; p < pmap.size(); ++p) {
    if (pmap.entries[p].empty()) {
      throw Error(ErrorKind::ValidationError,
                  "parameter '" + pmap.names[p] + "' touches no LP entry");
    }
    double g = 0.0;
    for (const ParameterEntry& e : pmap.entries[p]) {
      bool eq_target = e.target == ParameterEntry::Target::EqRhs ||
                       e.target == ParameterEntry::Target::EqCoef;
      if (e.row < 0 || e.row >= (eq_target ? lp.num_eq() : lp.num_in())) {
        throw Error(ErrorKind::ValidationError,
                    "parameter '" + pmap.names[p] + "' references row " +
                        std::to_string(e.row) + " outside the LP");
      }
      switch (e.target) {
        case ParameterEntry::Target::EqRhs:
          g += -result.eq_duals(e.row) * e.weight;
          break;
        case ParameterEntry::Target::InRhs:
          g += -result.ineq_duals(e.row) * e.weight;
          break;
        case ParameterEntry::Target::EqCoef:
          g += result.eq_duals(e.row) * result.x(e.col) * e.weight;
          break;
        case ParameterEntry::Target::InCoef:
          g += result.ineq_duals(e.row) * result.x(e.col) * e.weight;
          break;
      }
    }
    out.gradient(p) = g;
  }
  return out;
}

}  // namespace gridplan
