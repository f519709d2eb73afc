#pragma once

#include "gridplan/lp.hpp"

namespace gridplan {

struct GradientResult {
  Eigen::VectorXd gradient;  // one entry per parameter in the map
  bool degenerate = false;   // strict complementarity margin below tolerance
  double margin = 0.0;
};

// Envelope-theorem gradient of the optimal value with respect to mapped
// parameters. For a rhs entry the gradient is minus the row dual; for a
// coefficient entry it is dual * primal (see the convention note in lp.hpp).
// At degenerate optima the result is a valid subgradient and `degenerate`
// is set. Throws NotOptimal unless result.status == Optimal.
GradientResult value_gradient(const SolveResult& result, const ParameterMap& pmap,
                              const StandardLP& lp, double degeneracy_tol = 1e-6);

// User-space KKT residuals of a candidate primal/dual point.
KktResiduals verify_kkt(const StandardLP& lp, const SolveResult& result);

}  // namespace gridplan
