#pragma once

#include "gridplan/lp.hpp"

namespace gridplan {

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 200;
  double regularization = 1e-8;  // static diagonal shift on the normal equations
  int refinement_steps = 1;
  // Fold single-entry rows into variable bounds before solving. Duals are
  // mapped back, so this is invisible to callers.
  bool simplify_single_entry_rows = true;
};

// Primal-dual interior point solve of a StandardLP via the homogeneous
// self-dual embedding with Mehrotra predictor-corrector steps.
// Throws NumericalBreakdown if the normal equations stay singular after
// regularization escalation; all other outcomes are reported in the status.
SolveResult solve(const StandardLP& lp, const SolveOptions& opts = {});
SolveResult solve(const StandardLP& lp, double tol, int max_iter);

}  // namespace gridplan
