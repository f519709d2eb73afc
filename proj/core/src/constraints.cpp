#include "gridplan/constraints.hpp"

#include <cmath>
#include <map>

namespace gridplan {

namespace {

constexpr double kCoefDrop = 1e-14;

ComplexAffine scale(const ComplexAffine& e, cplx k) {
  ComplexAffine out;
  out.constant = e.constant * k;
  out.terms.reserve(e.terms.size());
  for (auto& [c, v] : e.terms) out.terms.push_back({c, v * k});
  return out;
}

ComplexAffine conj(const ComplexAffine& e) {
  ComplexAffine out;
  out.constant = std::conj(e.constant);
  out.terms.reserve(e.terms.size());
  for (auto& [c, v] : e.terms) out.terms.push_back({c, std::conj(v)});
  return out;
}

void add_into(ComplexAffine& into, const ComplexAffine& e) {
  into.constant += e.constant;
  into.terms.insert(into.terms.end(), e.terms.begin(), e.terms.end());
}

AffineMatrix adjoint(const AffineMatrix& m) {
  AffineMatrix out;
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) out[p][q] = conj(m[q][p]);
  return out;
}

// A * M for constant A.
AffineMatrix left_mul(const Matrix3C& a, const AffineMatrix& m) {
  AffineMatrix out;
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q)
      for (int r = 0; r < 3; ++r) add_into(out[p][q], scale(m[r][q], a(p, r)));
  return out;
}

// M * A for constant A.
AffineMatrix right_mul(const AffineMatrix& m, const Matrix3C& a) {
  AffineMatrix out;
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q)
      for (int r = 0; r < 3; ++r) add_into(out[p][q], scale(m[p][r], a(r, q)));
  return out;
}

void add_matrix(AffineMatrix& into, const AffineMatrix& m, cplx k = {1.0, 0.0}) {
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) add_into(into[p][q], scale(m[p][q], k));
}

AffinePhases negate(const AffinePhases& l) {
  AffinePhases out;
  for (int p = 0; p < 3; ++p) out[p] = scale(l[p], cplx(-1.0, 0.0));
  return out;
}

// z S^H + S z^H for constant z.
AffineMatrix drop_expr(const Matrix3C& z, const AffineMatrix& s) {
  AffineMatrix sh = adjoint(s);
  AffineMatrix out = left_mul(z, sh);
  add_matrix(out, right_mul(s, z.adjoint()));
  return out;
}

// Real or imaginary part of an affine expression as an LP row "part == 0",
// i.e. terms on the left, minus the constant on the right. Coefficients
// below drop_tol are roundoff from cancelling complex products and are
// removed so that structurally vacuous rows vanish entirely.
ConstraintRow real_part_row(const ComplexAffine& e, bool imag_part,
                            const std::string& label, char relation = '=',
                            double rhs_extra = 0.0, double drop_tol = kCoefDrop) {
  std::map<int, double> merged;
  for (auto& [c, v] : e.terms) {
    double coef = imag_part ? v.imag() : v.real();
    if (coef != 0.0) merged[c] += coef;
  }
  ConstraintRow row;
  row.relation = relation;
  row.label = label;
  row.rhs = -(imag_part ? e.constant.imag() : e.constant.real()) + rhs_extra;
  if (std::abs(row.rhs) <= drop_tol) row.rhs = 0.0;
  for (auto& [c, v] : merged)
    if (std::abs(v) > drop_tol) row.terms.push_back({c, v});
  return row;
}

// Nine real rows for a Hermitian matrix equality diff = 0: three diagonal
// real parts, three off-diagonal real parts, three off-diagonal imaginary.
// scale_hint is the natural coefficient magnitude of the matrix equality;
// entries tiny relative to it are cancellation roundoff, and rows whose
// coefficients all vanish are dropped (free directions of a singular
// admittance). A vanished row with nonzero rhs is a modeling bug.
void emit_hermitian_equality(std::vector<ConstraintRow>& rows,
                             const AffineMatrix& diff, const std::string& label,
                             double scale_hint = 1.0) {
  const double drop = std::max(kCoefDrop, 1e-13 * scale_hint);
  std::vector<ConstraintRow> cand;
  auto push = [&cand, &label](ConstraintRow&& r) {
    if (!r.terms.empty()) {
      cand.push_back(std::move(r));
    } else if (std::abs(r.rhs) > 1e-9) {
      throw Error(ErrorKind::ValidationError,
                  "inconsistent constant row in '" + label + "'");
    }
  };
  for (int p = 0; p < 3; ++p)
    push(real_part_row(diff[p][p], false, label, '=', 0.0, drop));
  const int off[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (auto& pq : off) {
    push(real_part_row(diff[pq[0]][pq[1]], false, label, '=', 0.0, drop));
    push(real_part_row(diff[pq[0]][pq[1]], true, label, '=', 0.0, drop));
  }

  // The nine rows are rank-deficient (typically rank 5). Since every row is
  // homogeneous, dropping dependent ones leaves the solution set unchanged
  // and roughly halves the assembled system.
  bool homogeneous = true;
  for (const auto& r : cand) homogeneous = homogeneous && std::abs(r.rhs) <= 1e-12;
  if (!homogeneous) {
    for (auto& r : cand) rows.push_back(std::move(r));
    return;
  }
  std::map<int, int> col_index;
  for (const auto& r : cand)
    for (auto& [c, v] : r.terms)
      col_index.emplace(c, static_cast<int>(col_index.size()));
  std::vector<Eigen::VectorXd> pivots;
  for (auto& r : cand) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(col_index.size());
    for (auto& [c, coef] : r.terms) v(col_index[c]) = coef;
    double orig = v.norm();
    for (const auto& pvec : pivots) v -= pvec.dot(v) * pvec;
    if (v.norm() > 1e-10 * std::max(orig, 1.0)) {
      pivots.push_back(v / v.norm());
      rows.push_back(std::move(r));
    }
  }
}

// (v_tail^c - v_head^c) * A as an affine matrix.
AffineMatrix balanced_voltage_diff(const VariableMap& vm, int tail, int head, int t) {
  const Matrix3C A = gamma_matrix();  // A = alpha_+ alpha_+^H = gamma
  AffineMatrix out;
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) {
      out[p][q].terms.push_back({vm.vc(tail, t), A(p, q)});
      out[p][q].terms.push_back({vm.vc(head, t), -A(p, q)});
    }
  return out;
}

int child_of_line(const Network& net, const RootedTree& tree, int line_index) {
  const Line& ln = net.lines[line_index];
  int fi = net.bus_index(ln.from);
  int ti = net.bus_index(ln.to);
  if (tree.line_into[ti] == line_index && tree.parent[ti] == fi) return ti;
  if (tree.line_into[fi] == line_index && tree.parent[fi] == ti) return fi;
  throw Error(ErrorKind::ValidationError, "line not part of the rooted tree");
}

}  // namespace

VariableMap::VariableMap(const Network& net, int horizon)
    : nb_(net.bus_count()), nl_(net.line_count()), horizon_(horizon) {
  der_slot_.assign(nb_, -1);
  bus_ids_.resize(nb_);
  for (int b = 0; b < nb_; ++b) {
    bus_ids_[b] = net.buses[b].id;
    if (net.buses[b].kind != BusKind::Slack) der_slot_[b] = n_der_++;
  }
  x_base_ = 0;
  eta_ = n_der_;
  s_base_ = n_der_ + 1;
  const int T = horizon_;
  sd_base_ = s_base_ + 6 * nb_ * T;
  vc_base_ = sd_base_ + 3 * n_der_ * T;
  soc_base_ = vc_base_ + nb_ * T;
  // SOC carries a terminal state so the last dispatch step is charged too.
  lam_base_ = soc_base_ + 3 * n_der_ * (T + 1);
  num_cols_ = lam_base_ + 6 * nl_ * T;
}

int VariableMap::lam_re(int l, int t, int p) const {
  return lam_base_ + ((t * nl_ + l) * 3 + p);
}
int VariableMap::lam_im(int l, int t, int p) const {
  return lam_base_ + 3 * nl_ * horizon_ + ((t * nl_ + l) * 3 + p);
}

int VariableMap::x(int b) const {
  if (der_slot_[b] < 0) throw Error(ErrorKind::UnknownBus, "slack bus has no size column");
  return x_base_ + der_slot_[b];
}
int VariableMap::s_re(int b, int t, int p) const {
  return s_base_ + ((t * nb_ + b) * 3 + p);
}
int VariableMap::s_im(int b, int t, int p) const {
  return s_base_ + 3 * nb_ * horizon_ + ((t * nb_ + b) * 3 + p);
}
int VariableMap::sd_re(int b, int t, int p) const {
  if (der_slot_[b] < 0) throw Error(ErrorKind::UnknownBus, "slack bus has no dispatch column");
  return sd_base_ + ((t * n_der_ + der_slot_[b]) * 3 + p);
}
int VariableMap::vc(int b, int t) const { return vc_base_ + t * nb_ + b; }
int VariableMap::soc(int b, int t, int p) const {
  if (der_slot_[b] < 0) throw Error(ErrorKind::UnknownBus, "slack bus has no SOC column");
  return soc_base_ + ((t * n_der_ + der_slot_[b]) * 3 + p);
}

std::string VariableMap::name(int col) const {
  const int n_der = n_der_;
  const int T = horizon_;
  auto phase = [](int p) { return std::string(1, "abc"[p]); };
  if (col < n_der) {
    for (int b = 0; b < nb_; ++b)
      if (der_slot_[b] == col) return "x[" + std::to_string(bus_ids_[b]) + "]";
  }
  if (col == eta_) return "eta";
  if (col >= s_base_ && col < s_base_ + 6 * nb_ * T) {
    int k = col - s_base_;
    bool im = k >= 3 * nb_ * T;
    if (im) k -= 3 * nb_ * T;
    int p = k % 3, b = (k / 3) % nb_, t = k / (3 * nb_);
    return std::string(im ? "s_im[" : "s_re[") + std::to_string(bus_ids_[b]) + "]t" +
           std::to_string(t) + phase(p);
  }
  if (col >= sd_base_ && col < vc_base_) {
    int k = col - sd_base_;
    int p = k % 3, slot = (k / 3) % n_der, t = k / (3 * n_der);
    for (int b = 0; b < nb_; ++b)
      if (der_slot_[b] == slot)
        return "sd_re[" + std::to_string(bus_ids_[b]) + "]t" + std::to_string(t) + phase(p);
  }
  if (col >= vc_base_ && col < soc_base_) {
    int k = col - vc_base_;
    int b = k % nb_, t = k / nb_;
    return "vc[" + std::to_string(bus_ids_[b]) + "]t" + std::to_string(t);
  }
  if (col >= lam_base_ && col < num_cols_) {
    int k = col - lam_base_;
    bool im = k >= 3 * nl_ * T;
    if (im) k -= 3 * nl_ * T;
    int p = k % 3, l = (k / 3) % nl_, t = k / (3 * nl_);
    return std::string(im ? "lam_im[" : "lam_re[") + std::to_string(l) + "]t" +
           std::to_string(t) + phase(p);
  }
  if (col >= soc_base_ && col < lam_base_) {
    int k = col - soc_base_;
    int p = k % 3, slot = (k / 3) % n_der, t = k / (3 * n_der);
    for (int b = 0; b < nb_; ++b)
      if (der_slot_[b] == slot)
        return "soc[" + std::to_string(bus_ids_[b]) + "]t" + std::to_string(t) + phase(p);
  }
  return "col" + std::to_string(col);
}

void LinearConstraintSystem::append(std::vector<ConstraintRow>&& more) {
  for (auto& r : more) rows.push_back(std::move(r));
}

std::vector<ConstraintRow> assemble_flow_definitions(const Network& net,
                                                     const RootedTree& tree,
                                                     const VariableMap& vm, int t) {
  std::vector<ConstraintRow> rows;
  for (int l = 0; l < net.line_count(); ++l) {
    int child = child_of_line(net, tree, l);
    for (int im = 0; im < 2; ++im) {
      for (int p = 0; p < 3; ++p) {
        ConstraintRow row;
        row.label = "4b";
        row.relation = '=';
        row.rhs = 0.0;
        row.terms.push_back({im ? vm.lam_im(l, t, p) : vm.lam_re(l, t, p), 1.0});
        row.terms.push_back({im ? vm.s_im(child, t, p) : vm.s_re(child, t, p), 1.0});
        for (int c : tree.children[child]) {
          int m = tree.line_into[c];
          row.terms.push_back({im ? vm.lam_im(m, t, p) : vm.lam_re(m, t, p), -1.0});
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

namespace {

// The lambda columns of one line as a per-phase complex expression.
AffinePhases line_flow_phases(const VariableMap& vm, int line_index, int t) {
  AffinePhases lam;
  for (int p = 0; p < 3; ++p) {
    lam[p].terms.push_back({vm.lam_re(line_index, t, p), cplx(1.0, 0.0)});
    lam[p].terms.push_back({vm.lam_im(line_index, t, p), cplx(0.0, 1.0)});
  }
  return lam;
}

}  // namespace

AffinePhases subtree_flow_expr(const Network& net, const RootedTree& tree,
                               const VariableMap& vm, int line_index, int t) {
  int child = child_of_line(net, tree, line_index);
  AffinePhases lambda;
  std::vector<int> stack{child};
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int p = 0; p < 3; ++p) {
      lambda[p].terms.push_back({vm.s_re(u, t, p), cplx(-1.0, 0.0)});
      lambda[p].terms.push_back({vm.s_im(u, t, p), cplx(0.0, -1.0)});
    }
    for (int c : tree.children[u]) stack.push_back(c);
  }
  return lambda;
}

AffineMatrix flow_matrix_expr(const AffinePhases& lambda) {
  const Matrix3C g = gamma_matrix();
  AffineMatrix s;
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) s[p][q] = scale(lambda[q], g(p, q));
  return s;
}

std::vector<ConstraintRow> assemble_power_balance(const Network& net,
                                                  const VariableMap& vm, int t) {
  std::vector<ConstraintRow> rows;
  for (int im = 0; im < 2; ++im) {
    for (int p = 0; p < 3; ++p) {
      ConstraintRow row;
      row.label = "4a";
      row.relation = '=';
      row.rhs = 0.0;
      for (int b = 0; b < net.bus_count(); ++b)
        row.terms.push_back({im ? vm.s_im(b, t, p) : vm.s_re(b, t, p), 1.0});
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<ConstraintRow> assemble_voltage_impedance(const Network& net,
                                                      const RootedTree& tree,
                                                      const VariableMap& vm,
                                                      const ModelConfig& cfg, int t) {
  std::vector<ConstraintRow> rows;
  // Slack reference.
  ConstraintRow ref;
  ref.label = "15";
  ref.relation = '=';
  ref.rhs = cfg.slack_vref;
  ref.terms.push_back({vm.vc(tree.root_index, t), 1.0});
  rows.push_back(std::move(ref));

  // Cache per-line z S^H + S z^H in downhill orientation.
  std::vector<AffineMatrix> line_drop(net.line_count());
  std::vector<bool> have(net.line_count(), false);
  for (int u : tree.preorder) {
    if (tree.parent[u] < 0) continue;
    AffineMatrix rhs;  // accumulated drop along the path
    for (int l : path_to_root(net, tree, net.buses[u].id)) {
      if (!have[l]) {
        int child = child_of_line(net, tree, l);
        const Line& ln = net.lines[l];
        const Matrix3C& y = tree.line_points_down[child] ? ln.y_fwd : ln.y_rev;
        if (!is_invertible(y, cfg.invertibility_tol)) {
          throw Error(ErrorKind::SingularImpedance,
                      "line " + std::to_string(ln.from) + "->" + std::to_string(ln.to) +
                          " has a non-invertible admittance; use the admittance form");
        }
        Matrix3C z = y.inverse();
        AffineMatrix s = flow_matrix_expr(line_flow_phases(vm, l, t));
        line_drop[l] = drop_expr(z, s);
        have[l] = true;
      }
      add_matrix(rhs, line_drop[l]);
    }
    AffineMatrix diff = balanced_voltage_diff(vm, tree.root_index, u, t);
    add_matrix(diff, rhs, cplx(-1.0, 0.0));
    emit_hermitian_equality(rows, diff, "4d", 1.0);
  }
  return rows;
}

namespace {

// 9 rows of y (v_tail - v_head) y^H = S^H y^H + y S for one direction.
void emit_admittance_direction(std::vector<ConstraintRow>& rows, const VariableMap& vm,
                               const Matrix3C& y, const AffinePhases& lambda,
                               int tail, int head, int t) {
  AffineMatrix s = flow_matrix_expr(lambda);
  AffineMatrix lhs = left_mul(y, right_mul(balanced_voltage_diff(vm, tail, head, t), y.adjoint()));
  AffineMatrix rhs = left_mul(y, s);
  add_matrix(rhs, right_mul(adjoint(s), y.adjoint()));
  add_matrix(lhs, rhs, cplx(-1.0, 0.0));
  double ymax = y.cwiseAbs().maxCoeff();
  emit_hermitian_equality(rows, lhs, "13", 9.0 * std::max(ymax * ymax, ymax));
}

}  // namespace

std::vector<ConstraintRow> assemble_voltage_admittance(const Network& net,
                                                       const RootedTree& tree,
                                                       const VariableMap& vm,
                                                       const ModelConfig& /*cfg*/, int t) {
  std::vector<ConstraintRow> rows;
  for (int l = 0; l < net.line_count(); ++l) {
    const Line& ln = net.lines[l];
    int fi = net.bus_index(ln.from);
    int ti = net.bus_index(ln.to);
    int child = child_of_line(net, tree, l);
    AffinePhases lam_down = line_flow_phases(vm, l, t);
    // Stored forward direction from->to; under (4a) the reverse flow is the
    // negated subtree sum.
    AffinePhases lam_fwd = (ti == child) ? lam_down : negate(lam_down);
    emit_admittance_direction(rows, vm, ln.y_fwd, lam_fwd, fi, ti, t);
    emit_admittance_direction(rows, vm, ln.y_rev, negate(lam_fwd), ti, fi, t);
  }
  return rows;
}

std::vector<ConstraintRow> assemble_voltage_auto(const Network& net,
                                                 const RootedTree& tree,
                                                 const VariableMap& vm,
                                                 const ModelConfig& cfg, int t) {
  std::vector<ConstraintRow> rows;
  ConstraintRow ref;
  ref.label = "15";
  ref.relation = '=';
  ref.rhs = cfg.slack_vref;
  ref.terms.push_back({vm.vc(tree.root_index, t), 1.0});
  rows.push_back(std::move(ref));

  for (int l = 0; l < net.line_count(); ++l) {
    const Line& ln = net.lines[l];
    int child = child_of_line(net, tree, l);
    int parent = tree.parent[child];
    const Matrix3C& y_down = tree.line_points_down[child] ? ln.y_fwd : ln.y_rev;
    AffinePhases lam_down = line_flow_phases(vm, l, t);
    if (is_invertible(y_down, cfg.invertibility_tol) &&
        is_invertible(tree.line_points_down[child] ? ln.y_rev : ln.y_fwd,
                      cfg.invertibility_tol)) {
      // Per-line impedance relation in downhill orientation.
      Matrix3C z = y_down.inverse();
      AffineMatrix diff = balanced_voltage_diff(vm, parent, child, t);
      add_matrix(diff, drop_expr(z, flow_matrix_expr(lam_down)), cplx(-1.0, 0.0));
      emit_hermitian_equality(rows, diff, "4d");
    } else {
      int fi = net.bus_index(ln.from);
      int ti = net.bus_index(ln.to);
      AffinePhases lam_fwd = (ti == child) ? lam_down : negate(lam_down);
      emit_admittance_direction(rows, vm, ln.y_fwd, lam_fwd, fi, ti, t);
      emit_admittance_direction(rows, vm, ln.y_rev, negate(lam_fwd), ti, fi, t);
    }
  }
  return rows;
}

std::vector<ConstraintRow> assemble_operational_bounds(const Network& net,
                                                       const RootedTree& tree,
                                                       const VariableMap& vm, int t) {
  std::vector<ConstraintRow> rows;
  auto box = [&rows](int col, double lo, double hi, const std::string& label) {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw Error(ErrorKind::InvalidBounds,
                  "bad box [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    ConstraintRow up;
    up.label = label;
    up.relation = '<';
    up.rhs = hi;
    up.terms.push_back({col, 1.0});
    rows.push_back(std::move(up));
    ConstraintRow dn;
    dn.label = label;
    dn.relation = '<';
    dn.rhs = -lo;
    dn.terms.push_back({col, -1.0});
    rows.push_back(std::move(dn));
  };

  for (int b = 0; b < net.bus_count(); ++b) {
    const Bus& bus = net.buses[b];
    for (int p = 0; p < 3; ++p) {
      box(vm.s_re(b, t, p), bus.s_min(p).real(), bus.s_max(p).real(), "6a");
      box(vm.s_im(b, t, p), bus.s_min(p).imag(), bus.s_max(p).imag(), "6a");
    }
    if (!(bus.v_min > 0.0) || !(bus.v_min <= bus.v_max)) {
      throw Error(ErrorKind::InvalidBounds,
                  "bus " + std::to_string(bus.id) + " voltage box invalid");
    }
    box(vm.vc(b, t), bus.v_min, bus.v_max, "6b");
  }

  for (int l = 0; l < net.line_count(); ++l) {
    if (!net.lines[l].flow_cap) continue;
    double cap = *net.lines[l].flow_cap;
    if (cap < 0.0) throw Error(ErrorKind::InvalidBounds, "negative flow_cap");
    AffinePhases lam = line_flow_phases(vm, l, t);
    for (int p = 0; p < 3; ++p) {
      rows.push_back(real_part_row(scale(lam[p], cplx(1.0, 0.0)), false, "flow_cap", '<', cap));
      rows.push_back(real_part_row(scale(lam[p], cplx(-1.0, 0.0)), false, "flow_cap", '<', cap));
    }
  }
  return rows;
}

std::vector<ConstraintRow> assemble_der(
    const Network& net, const VariableMap& vm, const ModelConfig& cfg,
    const std::vector<std::vector<Eigen::Vector3d>>& load_rhs) {
  if (!(cfg.soc_min <= 0.0 && 0.0 <= cfg.soc_max)) {
    throw Error(ErrorKind::ConfigInvalid, "need soc_min <= 0 <= soc_max");
  }
  if (static_cast<int>(load_rhs.size()) != net.bus_count()) {
    throw Error(ErrorKind::HorizonMismatch, "load_rhs must have one entry per bus");
  }
  const int T = vm.horizon();
  std::vector<ConstraintRow> rows;
  for (int b = 0; b < net.bus_count(); ++b) {
    if (!vm.has_der(b)) continue;
    const Bus& bus = net.buses[b];
    if (static_cast<int>(load_rhs[b].size()) < T) {
      throw Error(ErrorKind::HorizonMismatch,
                  "load series at bus " + std::to_string(bus.id) + " shorter than horizon");
    }
    if (!bus.pv_profile.empty() && static_cast<int>(bus.pv_profile.size()) < T) {
      throw Error(ErrorKind::HorizonMismatch,
                  "pv profile at bus " + std::to_string(bus.id) + " shorter than horizon");
    }
    for (int t = 0; t < T; ++t) {
      for (int p = 0; p < 3; ++p) {
        double pv = bus.pv_profile.empty() ? 0.0 : bus.pv_profile[t](p).real();
        double rhs = pv + load_rhs[b][t](p);
        if (!std::isfinite(rhs)) {
          throw Error(ErrorKind::InvalidBounds, "non-finite load at bus " + std::to_string(bus.id));
        }
        // Injection composition. Positive dispatch charges the battery, so
        // it enters as extra consumption here while (7c) accumulates it.
        ConstraintRow r7a;
        r7a.label = "7a";
        r7a.relation = '=';
        r7a.rhs = rhs;
        r7a.terms.push_back({vm.s_re(b, t, p), 1.0});
        r7a.terms.push_back({vm.sd_re(b, t, p), 1.0});
        rows.push_back(std::move(r7a));

        ConstraintRow up;
        up.label = "7b";
        up.relation = '<';
        up.rhs = cfg.sd_max;
        up.terms.push_back({vm.sd_re(b, t, p), 1.0});
        rows.push_back(std::move(up));
        ConstraintRow dn;
        dn.label = "7b";
        dn.relation = '<';
        dn.rhs = -cfg.sd_min;
        dn.terms.push_back({vm.sd_re(b, t, p), -1.0});
        rows.push_back(std::move(dn));

        // SOC recursion including the terminal state after the last step, so
        // a zero-size installation cannot dispatch anywhere in the horizon.
        ConstraintRow rec;
        rec.label = "7c";
        rec.relation = '=';
        rec.rhs = 0.0;
        rec.terms.push_back({vm.soc(b, t + 1, p), 1.0});
        rec.terms.push_back({vm.soc(b, t, p), -1.0});
        rec.terms.push_back({vm.sd_re(b, t, p), -1.0});
        rows.push_back(std::move(rec));
      }
    }
    for (int t = 0; t <= T; ++t) {
      for (int p = 0; p < 3; ++p) {
        ConstraintRow socu;
        socu.label = "7e";
        socu.relation = '<';
        socu.rhs = 0.0;
        socu.terms.push_back({vm.soc(b, t, p), 1.0});
        socu.terms.push_back({vm.x(b), -cfg.soc_max});
        rows.push_back(std::move(socu));
        ConstraintRow socl;
        socl.label = "7e";
        socl.relation = '<';
        socl.rhs = 0.0;
        socl.terms.push_back({vm.soc(b, t, p), -1.0});
        socl.terms.push_back({vm.x(b), cfg.soc_min});
        rows.push_back(std::move(socl));
      }
    }
    for (int p = 0; p < 3; ++p) {
      ConstraintRow init;
      init.label = "7d";
      init.relation = '=';
      init.rhs = 0.0;
      init.terms.push_back({vm.soc(b, 0, p), 1.0});
      rows.push_back(std::move(init));
    }
  }
  return rows;
}

ObjectiveParts assemble_objective(const Network& net, const VariableMap& vm,
                                  const std::vector<Eigen::Vector3d>& price_upper) {
  if (static_cast<int>(price_upper.size()) < vm.horizon()) {
    throw Error(ErrorKind::HorizonMismatch, "price series shorter than horizon");
  }
  ObjectiveParts parts;
  parts.c = Eigen::VectorXd::Zero(vm.num_cols());
  for (int b = 0; b < net.bus_count(); ++b) {
    if (!vm.has_der(b)) continue;
    if (net.buses[b].bess_cost < 0.0) {
      throw Error(ErrorKind::InvalidBounds, "negative bess_cost at bus " +
                                                std::to_string(net.buses[b].id));
    }
    parts.c(vm.x(b)) = net.buses[b].bess_cost;
  }
  parts.c(vm.eta()) = 1.0;

  int slack = net.slack_index();
  parts.epigraph.label = "18-epigraph";
  parts.epigraph.relation = '<';
  parts.epigraph.rhs = 0.0;
  for (int t = 0; t < vm.horizon(); ++t) {
    for (int p = 0; p < 3; ++p) {
      double price = price_upper[t](p);
      if (price < 0.0) {
        throw Error(ErrorKind::InvalidBounds, "negative worst-case price");
      }
      if (price != 0.0) parts.epigraph.terms.push_back({vm.s_re(slack, t, p), price});
    }
  }
  parts.epigraph.terms.push_back({vm.eta(), -1.0});
  return parts;
}

StandardLP rows_to_lp(const LinearConstraintSystem& sys, int num_cols,
                      const Eigen::VectorXd& objective, double objective_const,
                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  StandardLP lp;
  lp.num_vars = num_cols;
  lp.c = objective;
  lp.c0 = objective_const;
  lp.lower = lower;
  lp.upper = upper;

  std::vector<Eigen::Triplet<double>> eq_t, in_t;
  std::vector<double> eq_b, in_b;
  for (const auto& row : sys.rows) {
    if (row.terms.empty()) {
      throw Error(ErrorKind::ValidationError, "all-zero constraint row '" + row.label + "'");
    }
    if (row.relation == '=') {
      int r = static_cast<int>(eq_b.size());
      for (auto& [c, v] : row.terms) eq_t.emplace_back(r, c, v);
      eq_b.push_back(row.rhs);
      lp.eq_labels.push_back(row.label);
    } else {
      int r = static_cast<int>(in_b.size());
      for (auto& [c, v] : row.terms) in_t.emplace_back(r, c, v);
      in_b.push_back(row.rhs);
      lp.in_labels.push_back(row.label);
    }
  }
  lp.eq_A.resize(static_cast<int>(eq_b.size()), num_cols);
  lp.eq_A.setFromTriplets(eq_t.begin(), eq_t.end());
  lp.eq_b = Eigen::Map<Eigen::VectorXd>(eq_b.data(), eq_b.size());
  lp.in_A.resize(static_cast<int>(in_b.size()), num_cols);
  lp.in_A.setFromTriplets(in_t.begin(), in_t.end());
  lp.in_b = Eigen::Map<Eigen::VectorXd>(in_b.data(), in_b.size());
  return lp;
}

}  // namespace gridplan
