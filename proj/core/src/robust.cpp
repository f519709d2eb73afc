#include "gridplan/robust.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gridplan/ipm.hpp"

namespace gridplan {

void BoxSet::validate() const {
  if (lower.rows() != upper.rows() || lower.cols() != upper.cols()) {
    throw Error(ErrorKind::InvalidBounds, "box lower/upper shapes differ");
  }
  for (int t = 0; t < steps(); ++t)
    for (int d = 0; d < dims(); ++d) {
      if (!(lower(t, d) <= upper(t, d)) || !std::isfinite(lower(t, d)) ||
          !std::isfinite(upper(t, d))) {
        throw Error(ErrorKind::InvalidBounds,
                    "box lower > upper at step " + std::to_string(t) + " dim " +
                        std::to_string(d));
      }
    }
}

BoxSet BoxSet::degenerate(const Eigen::MatrixXd& point) {
  return BoxSet{point, point};
}

std::vector<Eigen::Vector3d> worst_case_price(const BoxSet& price_box) {
  price_box.validate();
  std::vector<Eigen::Vector3d> out(price_box.steps());
  for (int t = 0; t < price_box.steps(); ++t) out[t] = price_box.upper.row(t).transpose();
  return out;
}

std::vector<Eigen::Vector3d> dominant_load(const BoxSet& load_box) {
  load_box.validate();
  std::vector<Eigen::Vector3d> out(load_box.steps());
  for (int t = 0; t < load_box.steps(); ++t) out[t] = load_box.upper.row(t).transpose();
  return out;
}

BoxAffineMap normalize_box(const BoxSet& box) {
  box.validate();
  return BoxAffineMap{box.lower, box.upper - box.lower};
}

DominantSet dominant_set(int m, double k) {
  if (m < 1 || !(k > 0.0) || k > static_cast<double>(m)) {
    throw Error(ErrorKind::InvalidBudget,
                "need 0 < k <= m, got m=" + std::to_string(m) + " k=" + std::to_string(k));
  }
  DominantSet out;
  out.m = m;
  out.k = k;
  out.beta = std::min(k, static_cast<double>(m) / k);
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    v(i) = out.beta;
    out.vertices.push_back(v);
  }
  out.vertices.push_back(Eigen::VectorXd::Constant(m, out.beta * k / m));
  return out;
}

namespace {

void validate_instance(const RobustInstance& inst, const VariableMap& vm) {
  inst.price_box.validate();
  inst.load_box.validate();
  const int T = inst.config.horizon;
  if (inst.price_box.steps() < T || inst.load_box.steps() < T) {
    throw Error(ErrorKind::HorizonMismatch, "uncertainty boxes shorter than horizon");
  }
  if (inst.weights.rows() != inst.network.bus_count() || inst.weights.cols() != 3) {
    throw Error(ErrorKind::ValidationError, "weights must be |buses| x 3");
  }
  for (int p = 0; p < 3; ++p) {
    double sum = 0.0;
    for (int b = 0; b < inst.network.bus_count(); ++b) {
      double w = inst.weights(b, p);
      if (w < 0.0) throw Error(ErrorKind::ValidationError, "negative disaggregation weight");
      if (!vm.has_der(b) && w != 0.0) {
        throw Error(ErrorKind::ValidationError, "slack bus cannot carry load weight");
      }
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error(ErrorKind::ValidationError, "weights must sum to 1 per phase");
    }
  }
}

}  // namespace

SingleStageModel build_single_stage(const RobustInstance& instance) {
  const Network& net = instance.network;
  const ModelConfig& cfg = instance.config;
  if (cfg.horizon < 1) {
    throw Error(ErrorKind::ConfigInvalid, "horizon must cover at least one step");
  }
  RootedTree tree = validate_radial(net);

  SingleStageModel model;
  model.horizon = cfg.horizon;
  model.vmap = VariableMap(net, cfg.horizon);
  const VariableMap& vm = model.vmap;
  validate_instance(instance, vm);

  std::vector<Eigen::Vector3d> prices = worst_case_price(instance.price_box);
  std::vector<Eigen::Vector3d> loads = dominant_load(instance.load_box);

  // Demands enter the injection composition as negative real injections.
  std::vector<std::vector<Eigen::Vector3d>> load_rhs(net.bus_count());
  for (int b = 0; b < net.bus_count(); ++b) {
    if (!vm.has_der(b)) continue;
    load_rhs[b].resize(cfg.horizon);
    for (int t = 0; t < cfg.horizon; ++t)
      for (int p = 0; p < 3; ++p)
        load_rhs[b][t](p) = -instance.weights(b, p) * loads[t](p);
  }

  ObjectiveParts obj = assemble_objective(net, vm, prices);

  LinearConstraintSystem sys;
  sys.rows.push_back(obj.epigraph);  // first so its inequality index is 0
  for (int t = 0; t < cfg.horizon; ++t) {
    sys.append(assemble_power_balance(net, vm, t));
    sys.append(assemble_flow_definitions(net, tree, vm, t));
    switch (cfg.mode) {
      case VoltageMode::Impedance:
        sys.append(assemble_voltage_impedance(net, tree, vm, cfg, t));
        break;
      case VoltageMode::Admittance: {
        auto rows = assemble_voltage_admittance(net, tree, vm, cfg, t);
        ConstraintRow ref;
        ref.label = "15";
        ref.relation = '=';
        ref.rhs = cfg.slack_vref;
        ref.terms.push_back({vm.vc(tree.root_index, t), 1.0});
        sys.rows.push_back(std::move(ref));
        sys.append(std::move(rows));
        break;
      }
      case VoltageMode::Auto:
        sys.append(assemble_voltage_auto(net, tree, vm, cfg, t));
        break;
    }
    sys.append(assemble_operational_bounds(net, tree, vm, t));
  }
  sys.append(assemble_der(net, vm, cfg, load_rhs));

  Eigen::VectorXd lower =
      Eigen::VectorXd::Constant(vm.num_cols(), -std::numeric_limits<double>::infinity());
  Eigen::VectorXd upper =
      Eigen::VectorXd::Constant(vm.num_cols(), std::numeric_limits<double>::infinity());
  for (int b = 0; b < net.bus_count(); ++b) {
    if (!vm.has_der(b)) continue;
    lower(vm.x(b)) = 0.0;
    upper(vm.x(b)) = net.buses[b].bess_candidate ? cfg.x_max : 0.0;
  }

  model.lp = rows_to_lp(sys, vm.num_cols(), obj.c, 0.0, lower, upper);
  model.epigraph_row = 0;

  // Parameter map: price uppers touch epigraph coefficients, load uppers the
  // 7a right-hand sides.
  const int slack = net.slack_index();
  for (int t = 0; t < cfg.horizon; ++t) {
    for (int p = 0; p < 3; ++p) {
      int idx = model.pmap.add("yP[" + std::to_string(t) + "][" + std::to_string(p) + "]");
      model.pmap.entries[idx].push_back(
          {ParameterEntry::Target::InCoef, model.epigraph_row, vm.s_re(slack, t, p), 1.0});
    }
  }
  // Locate 7a rows: scan equality rows in order, decode (b, t, p) from the
  // first term's column.
  std::vector<int> load_param_index(cfg.horizon * 3, -1);
  for (int t = 0; t < cfg.horizon; ++t)
    for (int p = 0; p < 3; ++p)
      load_param_index[t * 3 + p] =
          model.pmap.add("yD[" + std::to_string(t) + "][" + std::to_string(p) + "]");

  int eq_idx = 0;
  for (const auto& row : sys.rows) {
    if (row.relation != '=') continue;
    if (row.label == "7a") {
      int col = row.terms.front().first;  // s_re(b, t, p)
      bool found = false;
      for (int b = 0; b < net.bus_count() && !found; ++b) {
        if (!vm.has_der(b)) continue;
        for (int t = 0; t < cfg.horizon && !found; ++t) {
          for (int p = 0; p < 3 && !found; ++p) {
            if (vm.s_re(b, t, p) == col) {
              model.pmap.entries[load_param_index[t * 3 + p]].push_back(
                  {ParameterEntry::Target::EqRhs, eq_idx, 0,
                   -instance.weights(b, p)});
              found = true;
            }
          }
        }
      }
      if (!found) throw Error(ErrorKind::ValidationError, "unmapped 7a row");
    }
    ++eq_idx;
  }
  return model;
}

double PhysicsReport::max() const {
  return std::max({power_balance, soc_telescoping, soc_box, voltage_box, dispatch_box});
}

PhysicsReport check_physics(const RobustInstance& instance, const SingleStageModel& model,
                            const SolveResult& result) {
  const Network& net = instance.network;
  const ModelConfig& cfg = instance.config;
  const VariableMap& vm = model.vmap;
  const Eigen::VectorXd& x = result.x;
  PhysicsReport rep;

  for (int t = 0; t < cfg.horizon; ++t) {
    for (int p = 0; p < 3; ++p) {
      double re = 0.0, im = 0.0;
      for (int b = 0; b < net.bus_count(); ++b) {
        re += x(vm.s_re(b, t, p));
        im += x(vm.s_im(b, t, p));
      }
      rep.power_balance = std::max({rep.power_balance, std::abs(re), std::abs(im)});
    }
    for (int b = 0; b < net.bus_count(); ++b) {
      double vc = x(vm.vc(b, t));
      rep.voltage_box = std::max({rep.voltage_box, net.buses[b].v_min - vc,
                                  vc - net.buses[b].v_max, 0.0});
    }
  }
  for (int b = 0; b < net.bus_count(); ++b) {
    if (!vm.has_der(b)) continue;
    double size = x(vm.x(b));
    for (int p = 0; p < 3; ++p) {
      double running = 0.0;
      for (int t = 0; t <= cfg.horizon; ++t) {
        double soc = x(vm.soc(b, t, p));
        rep.soc_telescoping = std::max(rep.soc_telescoping, std::abs(soc - running));
        rep.soc_box = std::max({rep.soc_box, cfg.soc_min * size - soc,
                                soc - cfg.soc_max * size, 0.0});
        if (t < cfg.horizon) {
          double d = x(vm.sd_re(b, t, p));
          running += d;
          rep.dispatch_box = std::max({rep.dispatch_box, cfg.sd_min - d, d - cfg.sd_max, 0.0});
        }
      }
    }
  }
  return rep;
}

double brute_force_two_stage(const RobustInstance& instance, int grid_points_per_dim) {
  const ModelConfig& cfg = instance.config;
  instance.load_box.validate();

  // The oracle treats the uncertain load as one 3-vector shared by all steps.
  const int T = cfg.horizon;
  for (int t = 1; t < T; ++t) {
    if ((instance.load_box.lower.row(t) - instance.load_box.lower.row(0)).cwiseAbs().maxCoeff() >
            1e-12 ||
        (instance.load_box.upper.row(t) - instance.load_box.upper.row(0)).cwiseAbs().maxCoeff() >
            1e-12) {
      throw Error(ErrorKind::ValidationError,
                  "brute-force oracle needs a time-constant load box");
    }
  }

  Eigen::Vector3d lo = instance.load_box.lower.row(0).transpose();
  Eigen::Vector3d hi = instance.load_box.upper.row(0).transpose();
  std::vector<std::vector<double>> grids(3);
  for (int d = 0; d < 3; ++d) {
    if (hi(d) - lo(d) < 1e-12) {
      grids[d] = {lo(d)};
    } else {
      if (grid_points_per_dim < 2) {
        throw Error(ErrorKind::InvalidBudget, "grid needs >= 2 points per non-degenerate dim");
      }
      for (int g = 0; g < grid_points_per_dim; ++g)
        grids[d].push_back(lo(d) + (hi(d) - lo(d)) * g / (grid_points_per_dim - 1));
    }
  }
  size_t realizations = grids[0].size() * grids[1].size() * grids[2].size();

  // Outer x grid: the single-stage optimum plus +-20% around it.
  SingleStageModel stage = build_single_stage(instance);
  SolveResult base = solve(stage.lp, 1e-9, 200);
  if (base.status != SolveStatus::Optimal) {
    throw Error(ErrorKind::SolveFailed, "single-stage solve failed inside the oracle");
  }
  std::vector<int> cand;
  for (int b = 0; b < instance.network.bus_count(); ++b)
    if (stage.vmap.has_der(b) && instance.network.buses[b].bess_candidate) cand.push_back(b);

  std::vector<std::vector<double>> xgrids;
  for (int b : cand) {
    double xs = base.x(stage.vmap.x(b));
    std::vector<double> g;
    if (xs < 1e-7) {
      g = {0.0};
    } else {
      for (int k = 0; k <= 4; ++k) g.push_back(xs * (0.8 + 0.1 * k));
    }
    xgrids.push_back(g);
  }
  size_t xcombos = 1;
  for (auto& g : xgrids) xcombos *= g.size();
  if (realizations * std::max<size_t>(xcombos, 1) > 200000) {
    throw Error(ErrorKind::OracleTooLarge,
                std::to_string(realizations) + " realizations x " + std::to_string(xcombos) +
                    " sizing points exceed the oracle budget");
  }

  double best = std::numeric_limits<double>::infinity();
  std::vector<size_t> xi(cand.size(), 0);
  while (true) {
    // Inner max over the load grid with x pinned to the current combo.
    double worst = -std::numeric_limits<double>::infinity();
    std::vector<size_t> gi(3, 0);
    bool feasible_everywhere = true;
    while (true) {
      Eigen::Vector3d h(grids[0][gi[0]], grids[1][gi[1]], grids[2][gi[2]]);
      RobustInstance inner = instance;
      Eigen::MatrixXd point(T, 3);
      for (int t = 0; t < T; ++t) point.row(t) = h.transpose();
      inner.load_box = BoxSet::degenerate(point);
      SingleStageModel m = build_single_stage(inner);
      for (size_t i = 0; i < cand.size(); ++i) {
        int col = m.vmap.x(cand[i]);
        m.lp.lower(col) = m.lp.upper(col) = xgrids[i][xi[i]];
      }
      SolveResult r = solve(m.lp, 1e-9, 200);
      if (r.status != SolveStatus::Optimal) {
        feasible_everywhere = false;
        break;
      }
      worst = std::max(worst, r.objective);

      int d = 0;
      while (d < 3 && ++gi[d] == grids[d].size()) gi[d++] = 0;
      if (d == 3) break;
    }
    if (feasible_everywhere) best = std::min(best, worst);

    size_t i = 0;
    while (i < xi.size() && ++xi[i] == xgrids[i].size()) xi[i++] = 0;
    if (i == xi.size() || xi.empty()) break;
  }
  return best;
}

}  // namespace gridplan
