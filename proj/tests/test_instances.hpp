// Shared builders for small robust planning instances used by the unit and
// acceptance suites.
#pragma once

#include "gridplan/robust.hpp"
#include "gridplan/rng.hpp"

namespace gridplan::testing {

inline Matrix3C circulant_admittance(double zs_re = 0.01, double zs_im = 0.04,
                                     double ratio = 0.3) {
  cplx zs(zs_re, zs_im), zm = ratio * zs;
  Matrix3C z;
  z << zs, zm, zm, zm, zs, zm, zm, zm, zs;
  return z.inverse();
}

// Rank-1 transformer block g/3 * alpha_+ alpha_+^H: singular, passes balanced
// flow with a voltage-drop relation, asymmetric between directions.
inline Matrix3C transformer_admittance(cplx g) {
  Complex3 ap = alpha_plus();
  return (g / 3.0) * (ap * ap.adjoint());
}

struct SmallInstanceSpec {
  int n_buses = 3;   // total, slack included
  int horizon = 3;
  double base_load = 0.15;       // per phase, per-unit
  double load_spread = 0.04;     // box half-width
  double price_base = 2.0;
  double spike = 12.0;           // applied at one step so storage pays off
  uint64_t seed = 1;
  bool with_transformer = false;
  // Family for the two-stage equality check: free storage capacity, flat
  // prices and demand weights only on candidate buses, so the dominant-point
  // substitution is exact and every box realization stays dispatchable.
  bool oracle_friendly = false;
};

inline RobustInstance small_instance(const SmallInstanceSpec& spec) {
  Rng rng(spec.seed);
  RobustInstance inst;
  Network& net = inst.network;
  for (int i = 0; i < spec.n_buses; ++i) {
    Bus b;
    b.id = i;
    b.kind = i == 0 ? BusKind::Slack : BusKind::Load;
    b.s_min = i == 0 ? Complex3::Constant(cplx(0.0, -10.0))
                     : Complex3::Constant(cplx(-10.0, -10.0));
    b.s_max = Complex3::Constant(cplx(10.0, 10.0));
    b.v_min = 0.90;
    b.v_max = 1.10;
    b.bess_candidate = spec.oracle_friendly ? i == 1 : i != 0;
    b.bess_cost = (i == 0 || spec.oracle_friendly) ? 0.0 : rng.uniform(0.3, 0.8);
    net.buses.push_back(b);
  }
  for (int i = 0; i + 1 < spec.n_buses; ++i) {
    Line l;
    l.from = i;
    l.to = i + 1;
    double scale = rng.uniform(0.8, 1.2);
    l.y_fwd = l.y_rev = circulant_admittance(0.01 * scale, 0.04 * scale);
    net.lines.push_back(l);
  }
  if (spec.with_transformer && spec.n_buses >= 2) {
    Line& last = net.lines.back();
    last.y_fwd = transformer_admittance(cplx(30.0, -90.0));
    last.y_rev = transformer_admittance(cplx(27.0, -81.0) * std::polar(1.0, M_PI / 6));
    last.is_transformer = true;
  }

  inst.config.horizon = spec.horizon;
  inst.config.soc_min = 0.0;
  inst.config.soc_max = 2.0;
  inst.config.sd_min = -1.0;
  inst.config.sd_max = 1.0;
  inst.config.mode = VoltageMode::Auto;

  const int T = spec.horizon;
  inst.price_box.lower.resize(T, 3);
  inst.price_box.upper.resize(T, 3);
  inst.load_box.lower.resize(T, 3);
  inst.load_box.upper.resize(T, 3);
  int spike_at = T > 1 ? 1 : 0;
  for (int t = 0; t < T; ++t) {
    double p = spec.price_base + (!spec.oracle_friendly && t == spike_at ? spec.spike : 0.0);
    for (int d = 0; d < 3; ++d) {
      inst.price_box.lower(t, d) = 0.5 * p;
      inst.price_box.upper(t, d) = p;
      inst.load_box.lower(t, d) = spec.base_load - spec.load_spread;
      inst.load_box.upper(t, d) = spec.base_load + spec.load_spread;
    }
  }

  inst.weights = Eigen::MatrixXd::Zero(spec.n_buses, 3);
  double total = 0.0;
  std::vector<double> share(spec.n_buses, 0.0);
  for (int b = 1; b < spec.n_buses; ++b) {
    share[b] = net.buses[b].bess_candidate ? rng.uniform(0.5, 1.5) : 0.0;
    total += share[b];
  }
  for (int b = 1; b < spec.n_buses; ++b)
    for (int p = 0; p < 3; ++p) inst.weights(b, p) = share[b] / total;
  return inst;
}

}  // namespace gridplan::testing
