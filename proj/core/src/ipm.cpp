#include "gridplan/ipm.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "gridplan/errors.hpp"
#include "gridplan/sensitivity.hpp"

namespace gridplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// --------------------------------------------------------------------------
// Conversion of the general form
//     min c^T x,  eq_A x = eq_b,  in_A x <= in_b,  l <= x <= u
// to the pure standard form
//     min ct^T v,  At v = bt,  v >= 0
// used by the homogeneous embedding. Single-entry rows become bounds, fixed
// variables are substituted out, finite lower bounds are shifted away,
// upper-only variables are flipped, two-sided ones get a range row, free
// ones are split. Every transformation is recorded so the primal point and
// all duals can be mapped back.
// --------------------------------------------------------------------------

struct VarRecord {
  enum Kind { Shifted, Flipped, Free, Fixed } kind = Shifted;
  int col = -1;       // internal column
  double shift = 0.0; // lower bound (Shifted), upper bound (Flipped), value (Fixed)
  int range_row = -1; // internal row index of "v_j + slack = u - l", if any
};

struct RowRecord {
  enum Kind { Kept, ToBound, Vacuous } kind = Kept;
  int internal_row = -1;  // for Kept
  int var = -1;           // for ToBound
  double coef = 0.0;      // the single nonzero
};

struct Internal {
  Eigen::SparseMatrix<double> A;  // column major
  Eigen::VectorXd b, c;
  std::vector<char> is_free;      // per internal column
  double c0 = 0.0;
  int n = 0, m = 0;

  std::vector<VarRecord> vars;
  std::vector<RowRecord> eq_rows, in_rows;
  std::vector<int> in_slack_col;          // slack column of kept ineq rows (-1 otherwise)
  std::vector<int> lo_source, up_source;  // var -> defining ineq row index or -1 (user bound)
  std::vector<int> lo_eq_source, up_eq_source;  // var -> defining single-entry eq row or -1
  std::vector<int> fix_pass;              // presolve pass that pinned the var, or -1
  std::vector<double> row_scale;          // internal row equilibration factors
  bool detected_infeasible = false;
  std::string infeasible_note;
};

Internal convert(const StandardLP& lp, bool simplify) {
  const int n = lp.num_vars;
  Internal itl;
  itl.vars.resize(n);
  itl.eq_rows.resize(lp.num_eq());
  itl.in_rows.resize(lp.num_in());
  itl.in_slack_col.assign(lp.num_in(), -1);
  itl.lo_source.assign(n, -1);
  itl.up_source.assign(n, -1);
  itl.lo_eq_source.assign(n, -1);
  itl.up_eq_source.assign(n, -1);
  itl.fix_pass.assign(n, -1);

  Eigen::VectorXd lo = lp.lower.size() ? lp.lower : Eigen::VectorXd::Constant(n, -kInf);
  Eigen::VectorXd up = lp.upper.size() ? lp.upper : Eigen::VectorXd::Constant(n, kInf);

  // Row scans need per-row access; build transposed views once.
  Eigen::SparseMatrix<double, Eigen::RowMajor> eqR(lp.eq_A), inR(lp.in_A);

  if (simplify) {
    // Iterate to a fixed point: fixing a variable can make further rows
    // single-entry (e.g. a zero-size installation cascading through SOC and
    // dispatch rows).
    std::vector<char> fixed(n, 0);
    auto refresh_fixed = [&](int pass) {
      for (int j = 0; j < n; ++j) {
        bool f = std::isfinite(lo(j)) && std::isfinite(up(j)) &&
                 up(j) - lo(j) <= 1e-12 * (1.0 + std::abs(lo(j)));
        if (f && !fixed[j]) itl.fix_pass[j] = pass;
        fixed[j] = f;
      }
    };
    refresh_fixed(0);
    for (int pass = 0; pass < 16; ++pass) {
      bool changed = false;
      for (int r = 0; r < lp.num_in(); ++r) {
        if (itl.in_rows[r].kind != RowRecord::Kept) continue;
        int var = -1;
        double coef = 0.0, shift = 0.0;
        int count = 0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(inR, r); it; ++it) {
          if (it.value() == 0.0) continue;
          int j = static_cast<int>(it.col());
          if (fixed[j]) {
            shift += it.value() * 0.5 * (lo(j) + up(j));
          } else {
            ++count;
            var = j;
            coef = it.value();
          }
        }
        if (count > 1) continue;
        if (count == 0) {
          if (lp.in_b(r) - shift < -1e-9) {
            itl.detected_infeasible = true;
            itl.infeasible_note = "constant inequality row " + std::to_string(r) + " violated";
            return itl;
          }
          itl.in_rows[r] = {RowRecord::Vacuous, -1, -1, 0.0};
          changed = true;
          continue;
        }
        double bound = (lp.in_b(r) - shift) / coef;
        itl.in_rows[r] = {RowRecord::ToBound, -1, var, coef};
        if (coef > 0) {
          if (bound < up(var)) { up(var) = bound; itl.up_source[var] = r; itl.up_eq_source[var] = -1; }
        } else {
          if (bound > lo(var)) { lo(var) = bound; itl.lo_source[var] = r; itl.lo_eq_source[var] = -1; }
        }
        changed = true;
      }
      for (int r = 0; r < lp.num_eq(); ++r) {
        if (itl.eq_rows[r].kind != RowRecord::Kept) continue;
        int var = -1;
        double coef = 0.0, shift = 0.0;
        int count = 0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(eqR, r); it; ++it) {
          if (it.value() == 0.0) continue;
          int j = static_cast<int>(it.col());
          if (fixed[j]) {
            shift += it.value() * 0.5 * (lo(j) + up(j));
          } else {
            ++count;
            var = j;
            coef = it.value();
          }
        }
        if (count > 1) continue;
        if (count == 0) {
          if (std::abs(lp.eq_b(r) - shift) > 1e-9) {
            itl.detected_infeasible = true;
            itl.infeasible_note = "constant equality row " + std::to_string(r) + " violated";
            return itl;
          }
          itl.eq_rows[r] = {RowRecord::Vacuous, -1, -1, 0.0};
          changed = true;
          continue;
        }
        double v = (lp.eq_b(r) - shift) / coef;
        itl.eq_rows[r] = {RowRecord::ToBound, -1, var, coef};
        if (v < lo(var) - 1e-9 || v > up(var) + 1e-9) {
          itl.detected_infeasible = true;
          itl.infeasible_note = "single-entry equality row " + std::to_string(r) +
                                " conflicts with bounds";
          return itl;
        }
        if (v > lo(var)) { lo(var) = v; itl.lo_source[var] = -1; itl.lo_eq_source[var] = r; }
        if (v < up(var)) { up(var) = v; itl.up_source[var] = -1; itl.up_eq_source[var] = r; }
        changed = true;
      }
      refresh_fixed(pass + 1);
      bool crossing = false;
      for (int j = 0; j < n; ++j)
        crossing = crossing || lo(j) > up(j) + 1e-9 * (1.0 + std::abs(lo(j)));
      if (crossing || !changed) break;
    }
  }

  for (int j = 0; j < n; ++j) {
    if (lo(j) > up(j) + 1e-9 * (1.0 + std::abs(lo(j)))) {
      itl.detected_infeasible = true;
      itl.infeasible_note = "crossing bounds on column " + std::to_string(j);
    }
  }
  if (itl.detected_infeasible) return itl;

  // Assign internal columns.
  int ncols = 0;
  int nranges = 0;
  for (int j = 0; j < n; ++j) {
    VarRecord& v = itl.vars[j];
    bool lo_fin = std::isfinite(lo(j)), up_fin = std::isfinite(up(j));
    if (lo_fin && up_fin && up(j) - lo(j) <= 1e-12 * (1.0 + std::abs(lo(j)))) {
      v.kind = VarRecord::Fixed;
      v.shift = 0.5 * (lo(j) + up(j));
    } else if (lo_fin) {
      v.kind = VarRecord::Shifted;
      v.shift = lo(j);
      v.col = ncols++;
      if (up_fin) ++nranges;
    } else if (up_fin) {
      v.kind = VarRecord::Flipped;
      v.shift = up(j);
      v.col = ncols++;
    } else {
      v.kind = VarRecord::Free;
      v.col = ncols++;
    }
  }

  // Count internal rows: kept eq + kept ineq (with slack) + range rows.
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  std::vector<double> cost(ncols, 0.0);

  auto add_entry = [&](int row, int j, double a) {
    const VarRecord& v = itl.vars[j];
    switch (v.kind) {
      case VarRecord::Fixed:
        rhs[row] -= a * v.shift;
        break;
      case VarRecord::Shifted:
        trip.emplace_back(row, v.col, a);
        rhs[row] -= a * v.shift;
        break;
      case VarRecord::Flipped:
        trip.emplace_back(row, v.col, -a);
        rhs[row] -= a * v.shift;
        break;
      case VarRecord::Free:
        trip.emplace_back(row, v.col, a);
        break;
    }
  };

  int mrow = 0;
  for (int r = 0; r < lp.num_eq(); ++r) {
    if (itl.eq_rows[r].kind == RowRecord::ToBound) continue;
    bool any = false;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(eqR, r); it; ++it)
      if (it.value() != 0.0) { any = true; break; }
    if (!any) {
      itl.eq_rows[r].kind = RowRecord::Vacuous;
      if (std::abs(lp.eq_b(r)) > 1e-9) {
        itl.detected_infeasible = true;
        itl.infeasible_note = "zero row with nonzero rhs";
        return itl;
      }
      continue;
    }
    itl.eq_rows[r] = {RowRecord::Kept, mrow, -1, 0.0};
    rhs.push_back(lp.eq_b(r));
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(eqR, r); it; ++it)
      if (it.value() != 0.0) add_entry(mrow, static_cast<int>(it.col()), it.value());
    ++mrow;
  }
  for (int r = 0; r < lp.num_in(); ++r) {
    if (itl.in_rows[r].kind == RowRecord::ToBound) continue;
    bool any = false;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(inR, r); it; ++it)
      if (it.value() != 0.0) { any = true; break; }
    if (!any) {
      itl.in_rows[r].kind = RowRecord::Vacuous;
      if (lp.in_b(r) < -1e-9) {
        itl.detected_infeasible = true;
        itl.infeasible_note = "zero inequality row with negative rhs";
        return itl;
      }
      continue;
    }
    itl.in_rows[r] = {RowRecord::Kept, mrow, -1, 0.0};
    rhs.push_back(lp.in_b(r));
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(inR, r); it; ++it)
      if (it.value() != 0.0) add_entry(mrow, static_cast<int>(it.col()), it.value());
    int slack = static_cast<int>(cost.size());
    cost.push_back(0.0);
    trip.emplace_back(mrow, slack, 1.0);
    itl.in_slack_col[r] = slack;
    ++mrow;
  }
  // Range rows for two-sided variables: v_j + slack = u - l.
  for (int j = 0; j < n; ++j) {
    VarRecord& v = itl.vars[j];
    if (v.kind != VarRecord::Shifted || !std::isfinite(up(j))) continue;
    v.range_row = mrow;
    rhs.push_back(up(j) - lo(j));
    trip.emplace_back(mrow, v.col, 1.0);
    int slack = static_cast<int>(cost.size());
    cost.push_back(0.0);
    trip.emplace_back(mrow, slack, 1.0);
    ++mrow;
  }

  // Objective.
  for (int j = 0; j < n; ++j) {
    const VarRecord& v = itl.vars[j];
    double cj = lp.c(j);
    if (cj == 0.0) continue;
    switch (v.kind) {
      case VarRecord::Fixed: itl.c0 += cj * v.shift; break;
      case VarRecord::Shifted: cost[v.col] += cj; itl.c0 += cj * v.shift; break;
      case VarRecord::Flipped: cost[v.col] -= cj; itl.c0 += cj * v.shift; break;
      case VarRecord::Free: cost[v.col] += cj; break;
    }
  }

  itl.n = static_cast<int>(cost.size());
  itl.m = mrow;
  itl.is_free.assign(itl.n, 0);
  for (const VarRecord& v : itl.vars)
    if (v.kind == VarRecord::Free) itl.is_free[v.col] = 1;

  // Equilibrate rows to unit max-norm; admittance blocks otherwise dwarf the
  // unit-coefficient balance rows.
  itl.row_scale.assign(mrow, 1.0);
  for (const auto& t : trip)
    itl.row_scale[t.row()] = std::max(itl.row_scale[t.row()], std::abs(t.value()));
  for (int r = 0; r < mrow; ++r) itl.row_scale[r] = 1.0 / itl.row_scale[r];
  for (auto& t : trip)
    t = Eigen::Triplet<double>(t.row(), t.col(), t.value() * itl.row_scale[t.row()]);
  for (int r = 0; r < mrow; ++r) rhs[r] *= itl.row_scale[r];

  itl.A.resize(mrow, itl.n);
  itl.A.setFromTriplets(trip.begin(), trip.end());
  itl.A.makeCompressed();
  itl.b = Eigen::Map<Eigen::VectorXd>(rhs.data(), rhs.size());
  itl.c = Eigen::Map<Eigen::VectorXd>(cost.data(), cost.size());
  return itl;
}

// --------------------------------------------------------------------------
// Homogeneous self-dual Mehrotra predictor-corrector on
//     min c^T v,  A v = b,  v >= 0.
// Iterate (v, y, z, tau, kappa) with residuals
//     r_p = b tau - A v
//     r_d = c tau - A^T y - z
//     r_g = kappa + c^T v - b^T y.
// tau > 0 at convergence scales back to an optimal point; kappa > 0 yields
// an infeasibility certificate.
// --------------------------------------------------------------------------

struct HsdResult {
  enum class Status { Optimal, PrimalInfeasible, DualInfeasible, IterationLimit } status;
  Eigen::VectorXd x, y, z;  // scaled by 1/tau at Optimal
  int iterations = 0;
  std::vector<std::array<double, 5>> trace;
};

// Quasidefinite augmented system
//   [ A Theta A^T + d I    A_F ] [dy  ]   [r1]
//   [ A_F^T               -d I ] [dxF ] = [r2]
// where Theta lives on the sign-constrained columns and A_F collects the
// free ones. Quasidefinite matrices admit LDL^T under any symmetric
// permutation, which is exactly what SimplicialLDLT computes.
struct AugmentedSolver {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  Eigen::SparseMatrix<double> K;
  bool analyzed = false;
  double delta = 0.0;
  double good_delta = 0.0;  // smallest regularization that factorized cleanly

  bool factor(const Eigen::SparseMatrix<double>& A, const Eigen::SparseMatrix<double>& AF,
              const Eigen::VectorXd& theta, double delta) {
    this->delta = delta;
    auto t0 = std::chrono::steady_clock::now();
    const int m = static_cast<int>(A.rows());
    const int nf = static_cast<int>(AF.cols());
    Eigen::SparseMatrix<double> AT = theta.asDiagonal() * A.transpose();
    Eigen::SparseMatrix<double> M = A * AT;  // keeps structural zeros: stable pattern

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(M.nonZeros() + 2 * AF.nonZeros() + m + nf);
    for (int k = 0; k < M.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(M, k); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int r = 0; r < m; ++r) trip.emplace_back(r, r, delta);
    for (int k = 0; k < AF.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(AF, k); it; ++it) {
        trip.emplace_back(static_cast<int>(it.row()), m + static_cast<int>(it.col()), it.value());
        trip.emplace_back(m + static_cast<int>(it.col()), static_cast<int>(it.row()), it.value());
      }
    for (int j = 0; j < nf; ++j) trip.emplace_back(m + j, m + j, -delta);
    K.resize(m + nf, m + nf);
    K.setFromTriplets(trip.begin(), trip.end());
    auto t1 = std::chrono::steady_clock::now();
    if (!analyzed) {
      ldlt.analyzePattern(K);
      analyzed = true;
    }
    auto t2 = std::chrono::steady_clock::now();
    ldlt.factorize(K);
    auto t3 = std::chrono::steady_clock::now();
    if (std::getenv("GRIDPLAN_IPM_PROF")) {
      fprintf(stderr, "[ipm] K=%dx%d nnz=%ld build=%.1fms analyze=%.1fms factor=%.1fms info=%d delta=%g\n",
              (int)K.rows(), (int)K.cols(), (long)K.nonZeros(),
              std::chrono::duration<double, std::milli>(t1 - t0).count(),
              std::chrono::duration<double, std::milli>(t2 - t1).count(),
              std::chrono::duration<double, std::milli>(t3 - t2).count(),
              (int)ldlt.info(), delta);
    }
    return ldlt.info() == Eigen::Success;
  }

  // Solves against the unregularized matrix by iterating the factored
  // shifted system: residuals are formed for K - D with D the +-delta
  // blocks, so the regularization bias is refined away.
  Eigen::VectorXd solve(const Eigen::VectorXd& r, int refine, int m_rows) const {
    Eigen::VectorXd x = ldlt.solve(r);
    for (int k = 0; k < refine; ++k) {
      Eigen::VectorXd res = r - K * x;
      res.head(m_rows) += delta * x.head(m_rows);
      res.tail(x.size() - m_rows) -= delta * x.tail(x.size() - m_rows);
      x += ldlt.solve(res);
    }
    return x;
  }
};

HsdResult hsd_solve(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                    const Eigen::VectorXd& c, const std::vector<char>& is_free,
                    const SolveOptions& opts) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(b.size());

  // Column bookkeeping: bounded columns carry (x > 0, z > 0); free columns
  // carry an unconstrained x and no dual slack.
  std::vector<int> free_cols, free_slot(n, -1);
  int nb = 0;
  for (int j = 0; j < n; ++j) {
    if (is_free[j]) {
      free_slot[j] = static_cast<int>(free_cols.size());
      free_cols.push_back(j);
    } else {
      ++nb;
    }
  }
  const int nf = static_cast<int>(free_cols.size());
  Eigen::SparseMatrix<double> AF(m, nf);
  {
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < nf; ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(A, free_cols[k]); it; ++it)
        trip.emplace_back(static_cast<int>(it.row()), k, it.value());
    AF.setFromTriplets(trip.begin(), trip.end());
  }

  Eigen::VectorXd x(n), z(n);
  for (int j = 0; j < n; ++j) {
    x(j) = is_free[j] ? 0.0 : 1.0;
    z(j) = is_free[j] ? 0.0 : 1.0;
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  double tau = 1.0, kappa = 1.0;

  const double bnorm = m ? b.cwiseAbs().maxCoeff() : 0.0;
  const double cnorm = n ? c.cwiseAbs().maxCoeff() : 0.0;
  const double amax = [&] {
    double v = 0.0;
    for (int k = 0; k < A.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
        v = std::max(v, std::abs(it.value()));
    return v;
  }();
  const double mu0 = (x.dot(z) + tau * kappa) / (nb + 1);

  AugmentedSolver aug;
  HsdResult out;
  out.status = HsdResult::Status::IterationLimit;

  auto step_limit = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double a = kInf;
    for (int i = 0; i < v.size(); ++i)
      if (!is_free[i] && dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
    return a;
  };

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    auto it_start = std::chrono::steady_clock::now();
    out.iterations = iter;
    Eigen::VectorXd rp = b * tau - A * x;
    Eigen::VectorXd rd = c * tau - A.transpose() * y - z;
    double rg = kappa + c.dot(x) - b.dot(y);
    double mu = (x.dot(z) + tau * kappa) / (nb + 1);

    // Convergence on the scaled point.
    {
      Eigen::VectorXd xs = x / tau, ys = y / tau, zs = z / tau;
      double pin = m ? (A * xs - b).cwiseAbs().maxCoeff() / (1.0 + bnorm) : 0.0;
      double din = (A.transpose() * ys + zs - c).cwiseAbs().maxCoeff() / (1.0 + cnorm);
      double pobj = c.dot(xs), dobj = b.dot(ys);
      out.trace.push_back({pobj, dobj, pin, din, mu});
      double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
      if (pin <= opts.tol && din <= opts.tol && gap <= opts.tol) {
        out.status = HsdResult::Status::Optimal;
        out.x = xs;
        out.y = ys;
        out.z = zs;
        return out;
      }
    }

    // Infeasibility certificates.
    double by = b.dot(y), cx = c.dot(x);
    if (by > opts.tol) {
      Eigen::VectorXd yn = y / by;
      Eigen::VectorXd zn = z / by;
      double viol = (A.transpose() * yn + zn).cwiseAbs().maxCoeff();
      double scale = 1.0 + amax * yn.cwiseAbs().maxCoeff();
      if (viol <= 1e-9 * scale && tau <= 1e-7 * std::max(1.0, kappa)) {
        out.status = HsdResult::Status::PrimalInfeasible;
        out.x = x;
        out.y = yn;
        out.z = zn;
        return out;
      }
    }
    if (cx < -opts.tol) {
      Eigen::VectorXd xn = x / (-cx);
      double viol = m ? (A * xn).cwiseAbs().maxCoeff() : 0.0;
      double scale = 1.0 + amax * xn.cwiseAbs().maxCoeff();
      if (viol <= 1e-9 * scale && tau <= 1e-7 * std::max(1.0, kappa)) {
        out.status = HsdResult::Status::DualInfeasible;
        out.x = xn;
        out.y = y;
        out.z = z;
        return out;
      }
    }
    if (mu < 1e-14 * mu0 && tau < 1e-10) {
      out.status = by > -cx ? HsdResult::Status::PrimalInfeasible
                            : HsdResult::Status::DualInfeasible;
      out.x = x;
      out.y = y;
      out.z = z;
      return out;
    }

    Eigen::VectorXd theta(n);
    for (int j = 0; j < n; ++j)
      theta(j) = is_free[j] ? 0.0
                            : std::min(std::max(x(j) / z(j), 1e-14), 1e14);
    // Exact row dependencies (unit-coefficient balance identities) make the
    // normal block singular at tiny shifts; remember the shift that worked
    // so later iterations do not re-discover it.
    double delta = std::max(opts.regularization, aug.good_delta / 100.0);
    bool ok = false;
    for (int attempt = 0; attempt < 4 && !ok; ++attempt, delta *= 100.0)
      ok = aug.factor(A, AF, theta, delta);
    if (!ok) {
      throw Error(ErrorKind::NumericalBreakdown,
                  "augmented system factorization failed at iteration " +
                      std::to_string(iter));
    }
    aug.good_delta = aug.delta;

    // tau-column pieces shared by predictor and corrector:
    // (u2, w2) solves the augmented system against (A Theta c + b, c_F).
    Eigen::VectorXd thc = theta.cwiseProduct(c);
    Eigen::VectorXd rhs2(m + nf);
    rhs2.head(m) = A * thc + b;
    for (int k = 0; k < nf; ++k) rhs2(m + k) = c(free_cols[k]);
    Eigen::VectorXd uw2 = aug.solve(rhs2, opts.refinement_steps, m);
    Eigen::VectorXd u2 = uw2.head(m);
    Eigen::VectorXd p2 = theta.cwiseProduct(A.transpose() * u2 - c);
    for (int k = 0; k < nf; ++k) p2(free_cols[k]) = uw2(m + k);
    double ctp2 = c.dot(p2), btu2 = b.dot(u2);

    auto direction = [&](double eta, const Eigen::VectorXd& rc, double rck,
                         Eigen::VectorXd& dx, Eigen::VectorXd& dy, Eigen::VectorXd& dz,
                         double& dtau, double& dkappa) {
      Eigen::VectorXd f(n);
      for (int j = 0; j < n; ++j)
        f(j) = is_free[j] ? 0.0 : eta * rd(j) - rc(j) / x(j);
      Eigen::VectorXd rhs1(m + nf);
      rhs1.head(m) = eta * rp + A * theta.cwiseProduct(f);
      for (int k = 0; k < nf; ++k) rhs1(m + k) = eta * rd(free_cols[k]);
      Eigen::VectorXd uw1 = aug.solve(rhs1, opts.refinement_steps, m);
      Eigen::VectorXd u1 = uw1.head(m);
      Eigen::VectorXd p1 = theta.cwiseProduct(A.transpose() * u1 - f);
      for (int k = 0; k < nf; ++k) p1(free_cols[k]) = uw1(m + k);

      double den = btu2 - ctp2 + kappa / tau;
      double num = eta * rg - b.dot(u1) + c.dot(p1) + rck / tau;
      if (std::abs(den) < 1e-300) den = 1e-300;
      dtau = num / den;
      dy = u1 + dtau * u2;
      dx = p1 + dtau * p2;
      // dz from the dual residual equation (exact in A^T y), which avoids
      // dividing by nearly-converged primal entries.
      Eigen::VectorXd aty = A.transpose() * dy;
      dz.resize(n);
      for (int j = 0; j < n; ++j)
        dz(j) = is_free[j] ? 0.0 : eta * rd(j) + c(j) * dtau - aty(j);
      dkappa = (rck - kappa * dtau) / tau;
    };

    // Predictor (affine scaling).
    Eigen::VectorXd rc_aff(n);
    for (int j = 0; j < n; ++j) rc_aff(j) = is_free[j] ? 0.0 : -x(j) * z(j);
    Eigen::VectorXd dxa(n), dya(m), dza(n);
    double dtaua, dkappaa;
    direction(1.0, rc_aff, -tau * kappa, dxa, dya, dza, dtaua, dkappaa);

    double amax_aff = std::min({step_limit(x, dxa), step_limit(z, dza),
                                dtaua < 0 ? -tau / dtaua : kInf,
                                dkappaa < 0 ? -kappa / dkappaa : kInf});
    double alpha_aff = std::min(1.0, amax_aff);
    double mu_aff = ((x + alpha_aff * dxa).dot(z + alpha_aff * dza) +
                     (tau + alpha_aff * dtaua) * (kappa + alpha_aff * dkappaa)) /
                    (nb + 1);
    double sigma = std::pow(std::max(0.0, mu_aff / mu), 3);
    sigma = std::min(std::max(sigma, 1e-8), 1.0 - 1e-8);

    // Corrector.
    Eigen::VectorXd rc(n);
    for (int j = 0; j < n; ++j)
      rc(j) = is_free[j] ? 0.0 : sigma * mu - x(j) * z(j) - dxa(j) * dza(j);
    double rck = sigma * mu - tau * kappa - dtaua * dkappaa;
    Eigen::VectorXd dx(n), dy(m), dz(n);
    double dtau, dkappa;
    direction(1.0 - sigma, rc, rck, dx, dy, dz, dtau, dkappa);

    double amax_c = std::min({step_limit(x, dx), step_limit(z, dz),
                              dtau < 0 ? -tau / dtau : kInf,
                              dkappa < 0 ? -kappa / dkappa : kInf});
    double alpha = std::min(1.0, 0.9995 * amax_c);
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      throw Error(ErrorKind::NumericalBreakdown, "non-positive step length");
    }

    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
    if (std::getenv("GRIDPLAN_IPM_PROF")) {
      fprintf(stderr, "[ipm] iter=%d total=%.1fms alpha=%.3f sigma=%.2e\n", iter,
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                        it_start)
                  .count(),
              alpha, sigma);
    }
  }
  // Iteration limit: hand back the scaled iterate for diagnostics.
  out.x = x / tau;
  out.y = y / tau;
  out.z = z / tau;
  return out;
}

}  // namespace

const char* solve_status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::PrimalInfeasible: return "primal-infeasible";
    case SolveStatus::DualInfeasible: return "dual-infeasible";
    case SolveStatus::IterationLimit: return "iteration-limit";
  }
  return "unknown";
}

double KktResiduals::max() const {
  return std::max(std::max(stationarity, primal_feasibility),
                  std::max(dual_feasibility, complementarity));
}

std::string dump_lp(const StandardLP& lp) {
  std::ostringstream os;
  os.precision(17);
  os << "vars " << lp.num_vars << " eq " << lp.num_eq() << " ineq " << lp.num_in() << "\n";
  os << "obj :";
  for (int j = 0; j < lp.num_vars; ++j)
    if (lp.c(j) != 0.0) os << " " << j << ":" << lp.c(j);
  os << "\n";
  for (int j = 0; j < lp.num_vars; ++j) {
    double lo = lp.lower.size() ? lp.lower(j) : -kInf;
    double up = lp.upper.size() ? lp.upper(j) : kInf;
    if (std::isfinite(lo) || std::isfinite(up))
      os << "bound " << j << " " << lo << " " << up << "\n";
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> eqR(lp.eq_A), inR(lp.in_A);
  for (int r = 0; r < lp.num_eq(); ++r) {
    os << (r < static_cast<int>(lp.eq_labels.size()) ? lp.eq_labels[r] : "eq")
       << " = " << lp.eq_b(r) << " :";
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(eqR, r); it; ++it)
      os << " " << it.col() << ":" << it.value();
    os << "\n";
  }
  for (int r = 0; r < lp.num_in(); ++r) {
    os << (r < static_cast<int>(lp.in_labels.size()) ? lp.in_labels[r] : "ineq")
       << " <= " << lp.in_b(r) << " :";
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(inR, r); it; ++it)
      os << " " << it.col() << ":" << it.value();
    os << "\n";
  }
  return os.str();
}

SolveResult solve(const StandardLP& lp, double tol, int max_iter) {
  SolveOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return solve(lp, opts);
}

SolveResult solve(const StandardLP& lp, const SolveOptions& opts) {
  if (lp.num_vars <= 0) {
    throw Error(ErrorKind::ValidationError, "LP has no variables");
  }
  if (lp.c.size() != lp.num_vars) {
    throw Error(ErrorKind::ValidationError, "objective size mismatch");
  }

  Internal itl = convert(lp, opts.simplify_single_entry_rows);

  SolveResult res;
  res.x = Eigen::VectorXd::Zero(lp.num_vars);
  res.eq_duals = Eigen::VectorXd::Zero(lp.num_eq());
  res.ineq_duals = Eigen::VectorXd::Zero(lp.num_in());
  res.lower_duals = Eigen::VectorXd::Zero(lp.num_vars);
  res.upper_duals = Eigen::VectorXd::Zero(lp.num_vars);

  if (itl.detected_infeasible) {
    res.status = SolveStatus::PrimalInfeasible;
    res.objective = kInf;
    return res;
  }

  if (itl.n == 0) {
    // Everything fixed by presolve; feasibility of the remaining constant
    // rows decides the status.
    res.status = SolveStatus::Optimal;
    for (int j = 0; j < lp.num_vars; ++j) res.x(j) = itl.vars[j].shift;
    double viol = 0.0;
    if (lp.num_eq()) viol = (lp.eq_A * res.x - lp.eq_b).cwiseAbs().maxCoeff();
    if (lp.num_in()) viol = std::max(viol, (lp.in_A * res.x - lp.in_b).maxCoeff());
    if (viol > 1e-7) {
      res.status = SolveStatus::PrimalInfeasible;
      res.objective = kInf;
      return res;
    }
    res.objective = lp.c.dot(res.x) + lp.c0;
    res.residuals = verify_kkt(lp, res);
    return res;
  }

  // Scale the objective so dual magnitudes stay O(1); regularization error
  // in the normal equations is proportional to them.
  double c_scale = std::max(1.0, itl.c.cwiseAbs().maxCoeff());
  Eigen::VectorXd c_scaled = itl.c / c_scale;
  HsdResult hsd = hsd_solve(itl.A, itl.b, c_scaled, itl.is_free, opts);
  hsd.y *= c_scale;
  hsd.z *= c_scale;
  for (int r = 0; r < itl.m; ++r) hsd.y(r) *= itl.row_scale[r];
  res.iterations = hsd.iterations;
  res.trace = std::move(hsd.trace);

  switch (hsd.status) {
    case HsdResult::Status::PrimalInfeasible:
      res.status = SolveStatus::PrimalInfeasible;
      res.objective = kInf;
      return res;
    case HsdResult::Status::DualInfeasible:
      res.status = SolveStatus::DualInfeasible;
      res.objective = -kInf;
      return res;
    case HsdResult::Status::IterationLimit:
      res.status = SolveStatus::IterationLimit;
      break;
    case HsdResult::Status::Optimal:
      res.status = SolveStatus::Optimal;
      break;
  }

  // Map the primal point back.
  for (int j = 0; j < lp.num_vars; ++j) {
    const VarRecord& v = itl.vars[j];
    switch (v.kind) {
      case VarRecord::Fixed: res.x(j) = v.shift; break;
      case VarRecord::Shifted: res.x(j) = v.shift + hsd.x(v.col); break;
      case VarRecord::Flipped: res.x(j) = v.shift - hsd.x(v.col); break;
      case VarRecord::Free: res.x(j) = hsd.x(v.col); break;
    }
  }
  res.objective = lp.c.dot(res.x) + lp.c0;
  if (res.status != SolveStatus::Optimal) {
    res.residuals = verify_kkt(lp, res);
    return res;
  }

  // Duals. Internal stationarity is c~ - A~^T y - z = 0 with z >= 0, which
  // matches the user convention with y_user = -y_internal.
  for (int r = 0; r < lp.num_eq(); ++r)
    if (itl.eq_rows[r].kind == RowRecord::Kept)
      res.eq_duals(r) = -hsd.y(itl.eq_rows[r].internal_row);
  for (int r = 0; r < lp.num_in(); ++r)
    if (itl.in_rows[r].kind == RowRecord::Kept)
      res.ineq_duals(r) = std::max(0.0, -hsd.y(itl.in_rows[r].internal_row));

  // Bound duals from internal reduced costs.
  for (int j = 0; j < lp.num_vars; ++j) {
    const VarRecord& v = itl.vars[j];
    switch (v.kind) {
      case VarRecord::Fixed:
        break;  // handled below from the stationarity residual
      case VarRecord::Shifted:
        res.lower_duals(j) = std::max(0.0, hsd.z(v.col));
        if (v.range_row >= 0) res.upper_duals(j) = std::max(0.0, -hsd.y(v.range_row));
        break;
      case VarRecord::Flipped:
        res.upper_duals(j) = std::max(0.0, hsd.z(v.col));
        break;
      case VarRecord::Free:
        break;  // no bound duals
    }
  }

  // Folded single-entry rows own the bound duals of the variables they
  // tightened; rows folded in later presolve passes can reference earlier
  // fixed variables, so assignments walk in reverse pass order while the
  // stationarity residual is updated row by row.
  Eigen::SparseMatrix<double, Eigen::RowMajor> eqR(lp.eq_A), inR(lp.in_A);
  Eigen::VectorXd stat = lp.c;
  if (lp.num_eq()) stat += lp.eq_A.transpose() * res.eq_duals;
  if (lp.num_in()) stat += lp.in_A.transpose() * res.ineq_duals;
  stat -= res.lower_duals;
  stat += res.upper_duals;

  auto bump_eq = [&](int row, double dy) {
    res.eq_duals(row) += dy;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(eqR, row); it; ++it)
      stat(it.col()) += it.value() * dy;
  };
  auto bump_in = [&](int row, double dmu) {
    res.ineq_duals(row) += dmu;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(inR, row); it; ++it)
      stat(it.col()) += it.value() * dmu;
  };

  // Non-fixed variables whose binding side came from a folded row: move the
  // recovered bound dual onto that row (their rows touch only older fixed
  // variables besides the target, handled below).
  for (int j = 0; j < lp.num_vars; ++j) {
    if (itl.vars[j].kind == VarRecord::Fixed) continue;
    if (itl.lo_source[j] >= 0 && res.lower_duals(j) > 0.0) {
      int row = itl.lo_source[j];
      double mu = res.lower_duals(j) / std::abs(itl.in_rows[row].coef);
      stat(j) += res.lower_duals(j);  // remove the bound-dual contribution
      res.lower_duals(j) = 0.0;
      bump_in(row, mu);
    }
    if (itl.up_source[j] >= 0 && res.upper_duals(j) > 0.0) {
      int row = itl.up_source[j];
      double mu = res.upper_duals(j) / itl.in_rows[row].coef;
      stat(j) -= res.upper_duals(j);
      res.upper_duals(j) = 0.0;
      bump_in(row, mu);
    }
    if (itl.lo_eq_source[j] >= 0 && res.lower_duals(j) > 0.0) {
      int row = itl.lo_eq_source[j];
      double dy = -res.lower_duals(j) / itl.eq_rows[row].coef;
      stat(j) += res.lower_duals(j);
      res.lower_duals(j) = 0.0;
      bump_eq(row, dy);
    }
    if (itl.up_eq_source[j] >= 0 && res.upper_duals(j) > 0.0) {
      int row = itl.up_eq_source[j];
      double dy = res.upper_duals(j) / itl.eq_rows[row].coef;
      stat(j) -= res.upper_duals(j);
      res.upper_duals(j) = 0.0;
      bump_eq(row, dy);
    }
  }

  // Fixed variables, newest fixes first.
  std::vector<int> fixed_vars;
  for (int j = 0; j < lp.num_vars; ++j)
    if (itl.vars[j].kind == VarRecord::Fixed) fixed_vars.push_back(j);
  std::sort(fixed_vars.begin(), fixed_vars.end(), [&](int a, int b) {
    return itl.fix_pass[a] > itl.fix_pass[b];
  });
  for (int j : fixed_vars) {
    double r = stat(j);
    if (r == 0.0) continue;
    if (itl.lo_eq_source[j] >= 0 || itl.up_eq_source[j] >= 0) {
      int row = itl.lo_eq_source[j] >= 0 ? itl.lo_eq_source[j] : itl.up_eq_source[j];
      bump_eq(row, -r / itl.eq_rows[row].coef);
    } else if (r > 0.0 && itl.lo_source[j] >= 0) {
      int row = itl.lo_source[j];
      bump_in(row, r / std::abs(itl.in_rows[row].coef));
    } else if (r < 0.0 && itl.up_source[j] >= 0) {
      int row = itl.up_source[j];
      bump_in(row, -r / itl.in_rows[row].coef);
    } else if (r > 0.0) {
      res.lower_duals(j) += r;
      stat(j) -= r;
    } else {
      res.upper_duals(j) += -r;
      stat(j) -= r;
    }
  }

  res.residuals = verify_kkt(lp, res);

  // Strict complementarity margin over inequality rows and finite bounds.
  double margin = kInf;
  if (lp.num_in()) {
    Eigen::VectorXd slack = lp.in_b - lp.in_A * res.x;
    for (int r = 0; r < lp.num_in(); ++r)
      margin = std::min(margin, std::max(res.ineq_duals(r), slack(r)));
  }
  for (int j = 0; j < lp.num_vars; ++j) {
    if (lp.lower.size() && std::isfinite(lp.lower(j)))
      margin = std::min(margin, std::max(res.lower_duals(j), res.x(j) - lp.lower(j)));
    if (lp.upper.size() && std::isfinite(lp.upper(j)))
      margin = std::min(margin, std::max(res.upper_duals(j), lp.upper(j) - res.x(j)));
  }
  res.complementarity_margin = std::isfinite(margin) ? margin : 1.0;
  return res;
}

}  // namespace gridplan
