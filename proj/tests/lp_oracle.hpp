// Test-only LP oracle: enumerates basic feasible points of small LPs and a
// generator of random instances with a known status class. Independent of
// the interior-point implementation it is used to check.
#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "gridplan/lp.hpp"
#include "gridplan/rng.hpp"

namespace gridplan::testing {

enum class OracleStatus { Optimal, Infeasible, Unbounded };

struct OracleResult {
  OracleStatus status = OracleStatus::Infeasible;
  double value = 0.0;
  Eigen::VectorXd x;
};

// One linear condition a^T x (= or <=) rhs gathered from rows and bounds.
struct Cond {
  Eigen::VectorXd a;
  double rhs = 0.0;
  bool eq = false;
};

inline std::vector<Cond> gather_conditions(const StandardLP& lp) {
  std::vector<Cond> conds;
  const int n = lp.num_vars;
  Eigen::MatrixXd eqd(lp.eq_A), ind(lp.in_A);
  for (int r = 0; r < lp.num_eq(); ++r)
    conds.push_back({eqd.row(r).transpose(), lp.eq_b(r), true});
  for (int r = 0; r < lp.num_in(); ++r)
    conds.push_back({ind.row(r).transpose(), lp.in_b(r), false});
  for (int j = 0; j < n; ++j) {
    if (lp.lower.size() && std::isfinite(lp.lower(j))) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
      a(j) = -1.0;
      conds.push_back({a, -lp.lower(j), false});
    }
    if (lp.upper.size() && std::isfinite(lp.upper(j))) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
      a(j) = 1.0;
      conds.push_back({a, lp.upper(j), false});
    }
  }
  return conds;
}

inline bool feasible_point(const StandardLP& lp, const Eigen::VectorXd& x, double tol) {
  if (lp.num_eq() && (lp.eq_A * x - lp.eq_b).cwiseAbs().maxCoeff() > tol) return false;
  if (lp.num_in() && (lp.in_A * x - lp.in_b).maxCoeff() > tol) return false;
  for (int j = 0; j < lp.num_vars; ++j) {
    if (lp.lower.size() && std::isfinite(lp.lower(j)) && x(j) < lp.lower(j) - tol) return false;
    if (lp.upper.size() && std::isfinite(lp.upper(j)) && x(j) > lp.upper(j) + tol) return false;
  }
  return true;
}

// Enumerate all bases formed by the equality rows plus subsets of the
// inequality conditions. Exact for LPs whose feasible set is a polytope
// (every variable bounded in every direction of the feasible set).
inline OracleResult vertex_enumeration(const StandardLP& lp, double tol = 1e-7) {
  const int n = lp.num_vars;
  std::vector<Cond> conds = gather_conditions(lp);
  std::vector<int> eq_idx, in_idx;
  for (int i = 0; i < static_cast<int>(conds.size()); ++i)
    (conds[i].eq ? eq_idx : in_idx).push_back(i);

  OracleResult best;
  best.status = OracleStatus::Infeasible;

  const int need = n - static_cast<int>(eq_idx.size());
  const int m_in = static_cast<int>(in_idx.size());
  if (need < 0 || need > m_in) {
    // Over-determined equalities can still admit a unique point.
    if (need < 0) {
      Eigen::MatrixXd A(eq_idx.size(), n);
      Eigen::VectorXd b(eq_idx.size());
      for (size_t i = 0; i < eq_idx.size(); ++i) {
        A.row(i) = conds[eq_idx[i]].a.transpose();
        b(i) = conds[eq_idx[i]].rhs;
      }
      Eigen::VectorXd x = A.colPivHouseholderQr().solve(b);
      if (feasible_point(lp, x, tol)) {
        best.status = OracleStatus::Optimal;
        best.value = lp.c.dot(x) + lp.c0;
        best.x = x;
      }
      return best;
    }
  }

  std::vector<int> pick(need);
  // iterate combinations of size `need` from in_idx
  std::vector<int> comb(need);
  for (int i = 0; i < need; ++i) comb[i] = i;
  bool done = need > m_in;
  if (need == 0 && !done) {
    // single candidate from equalities alone
    Eigen::MatrixXd A(eq_idx.size(), n);
    Eigen::VectorXd b(eq_idx.size());
    for (size_t i = 0; i < eq_idx.size(); ++i) {
      A.row(i) = conds[eq_idx[i]].a.transpose();
      b(i) = conds[eq_idx[i]].rhs;
    }
    if (static_cast<int>(eq_idx.size()) == n) {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
      if (lu.isInvertible()) {
        Eigen::VectorXd x = lu.solve(b);
        if (feasible_point(lp, x, tol)) {
          best.status = OracleStatus::Optimal;
          best.value = lp.c.dot(x) + lp.c0;
          best.x = x;
        }
      }
    }
    return best;
  }

  Eigen::MatrixXd A(n, n);
  Eigen::VectorXd b(n);
  while (!done) {
    int row = 0;
    for (int i : eq_idx) {
      A.row(row) = conds[i].a.transpose();
      b(row) = conds[i].rhs;
      ++row;
    }
    for (int k = 0; k < need; ++k) {
      int i = in_idx[comb[k]];
      A.row(row) = conds[i].a.transpose();
      b(row) = conds[i].rhs;
      ++row;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.isInvertible()) {
      Eigen::VectorXd x = lu.solve(b);
      if (feasible_point(lp, x, tol)) {
        double v = lp.c.dot(x) + lp.c0;
        if (best.status != OracleStatus::Optimal || v < best.value) {
          best.status = OracleStatus::Optimal;
          best.value = v;
          best.x = x;
        }
      }
    }
    // next combination
    int i = need - 1;
    while (i >= 0 && comb[i] == m_in - need + i) --i;
    if (i < 0) break;
    ++comb[i];
    for (int k = i + 1; k < need; ++k) comb[k] = comb[k - 1] + 1;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Random instance generator with known status class.
// ---------------------------------------------------------------------------

struct RandomLpSpec {
  int max_vars = 6;
  int max_rows = 8;
  OracleStatus klass = OracleStatus::Optimal;
};

inline StandardLP random_lp(Rng& rng, const RandomLpSpec& spec) {
  const int n = rng.uniform_int(2, spec.max_vars);
  StandardLP lp;
  lp.num_vars = n;
  lp.c = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) lp.c(j) = rng.uniform(-2.0, 2.0);
  lp.lower = Eigen::VectorXd::Zero(n);
  lp.upper = Eigen::VectorXd::Zero(n);

  // Feasible-by-construction interior point inside finite boxes.
  Eigen::VectorXd x0(n);
  for (int j = 0; j < n; ++j) {
    double lo = rng.uniform(-3.0, 0.0);
    double hi = lo + rng.uniform(0.5, 4.0);
    lp.lower(j) = lo;
    lp.upper(j) = hi;
    x0(j) = rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
  }

  // For the unbounded class one variable stays out of every row, loses its
  // cap and gets a negative cost: a feasible improving ray along e_j.
  int free_var = -1;
  if (spec.klass == OracleStatus::Unbounded) {
    free_var = rng.uniform_int(0, n - 1);
    lp.upper(free_var) = std::numeric_limits<double>::infinity();
    lp.c(free_var) = -rng.uniform(0.5, 2.0);
  }

  int rows = rng.uniform_int(1, spec.max_rows);
  int n_eq = rng.uniform_int(0, std::min(rows, n - 2 >= 0 ? n - 2 : 0));
  int n_in = rows - n_eq;

  // Full-rank equality block satisfied at x0.
  Eigen::MatrixXd eq_dense(n_eq, n);
  for (int r = 0; r < n_eq; ++r) {
    for (int tries = 0;; ++tries) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
      int nz = rng.uniform_int(2, n);
      for (int k = 0; k < nz; ++k) {
        int j = rng.uniform_int(0, n - 1);
        if (j == free_var) continue;
        a(j) = rng.uniform(-1.5, 1.5);
      }
      if (a.cwiseAbs().maxCoeff() < 0.05) continue;
      eq_dense.row(r) = a.transpose();
      Eigen::FullPivLU<Eigen::MatrixXd> lu(eq_dense.topRows(r + 1));
      if (lu.rank() == r + 1 || tries > 20) break;
    }
  }

  std::vector<Eigen::Triplet<double>> eq_t, in_t;
  std::vector<double> eq_b, in_b;
  for (int r = 0; r < n_eq; ++r) {
    for (int j = 0; j < n; ++j)
      if (eq_dense(r, j) != 0.0) eq_t.emplace_back(r, j, eq_dense(r, j));
    eq_b.push_back(eq_dense.row(r).dot(x0));
  }
  for (int r = 0; r < n_in; ++r) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    int nz = rng.uniform_int(1, n);
    for (int k = 0; k < nz; ++k) {
      int j = rng.uniform_int(0, n - 1);
      if (j == free_var) continue;
      a(j) = rng.uniform(-1.5, 1.5);
    }
    if (a.cwiseAbs().maxCoeff() < 0.05) a(free_var == 0 ? 1 : 0) = 1.0;
    double rhs = a.dot(x0) + rng.uniform(0.05, 1.5);  // strictly feasible at x0
    for (int j = 0; j < n; ++j)
      if (a(j) != 0.0) in_t.emplace_back(r, j, a(j));
    in_b.push_back(rhs);
  }

  if (spec.klass == OracleStatus::Infeasible) {
    // Contradictory pair on a random direction.
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) a(j) = rng.uniform(-1.0, 1.0);
    if (a.cwiseAbs().maxCoeff() < 0.1) a(0) = 1.0;
    double beta = a.dot(x0);
    int r = static_cast<int>(in_b.size());
    for (int j = 0; j < n; ++j)
      if (a(j) != 0.0) in_t.emplace_back(r, j, a(j));
    in_b.push_back(beta);
    ++r;
    for (int j = 0; j < n; ++j)
      if (a(j) != 0.0) in_t.emplace_back(r, j, -a(j));
    in_b.push_back(-beta - 1.0);  // a^T x <= beta and a^T x >= beta + 1
    n_in += 2;
  }

  lp.eq_A.resize(n_eq, n);
  lp.eq_A.setFromTriplets(eq_t.begin(), eq_t.end());
  lp.eq_b = Eigen::Map<Eigen::VectorXd>(eq_b.data(), eq_b.size());
  lp.in_A.resize(n_in, n);
  lp.in_A.setFromTriplets(in_t.begin(), in_t.end());
  lp.in_b = Eigen::Map<Eigen::VectorXd>(in_b.data(), in_b.size());
  return lp;
}

}  // namespace gridplan::testing
