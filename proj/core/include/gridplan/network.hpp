#pragma once

#include <optional>
#include <vector>

#include "gridplan/phase.hpp"

namespace gridplan {

enum class BusKind { Slack, Load };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::Load;
  // Per-phase injection box, per-unit. Real parts bound Re(s), imaginary
  // parts bound Im(s).
  Complex3 s_min = Complex3::Constant(cplx(-10.0, -10.0));
  Complex3 s_max = Complex3::Constant(cplx(10.0, 10.0));
  // Squared voltage magnitude box, per-unit^2.
  double v_min = 0.9025;
  double v_max = 1.1025;
  // Fixed PV injection per timestep (real power; Im typically 0).
  std::vector<Complex3> pv_profile;
  // PV capacity per phase, per-unit of real power at full solar output; the
  // profile is pv_scale * solar(t) when bound to a series.
  Eigen::Vector3d pv_scale = Eigen::Vector3d::Zero();
  double bess_cost = 0.0;  // $ per unit of installed size x_j
  bool bess_candidate = false;
};

struct Line {
  int from = 0;  // directed j -> k as given in the input
  int to = 0;
  Matrix3C y_fwd = Matrix3C::Zero();  // series admittance seen from `from`
  Matrix3C y_rev = Matrix3C::Zero();  // series admittance seen from `to`
  bool is_transformer = false;
  std::optional<double> flow_cap;  // per-phase |Re(lambda)| cap, per-unit
};

struct Network {
  std::vector<Bus> buses;
  std::vector<Line> lines;

  int bus_count() const { return static_cast<int>(buses.size()); }
  int line_count() const { return static_cast<int>(lines.size()); }
  // Index into `buses` for a bus id; throws UnknownBus.
  int bus_index(int id) const;
  const Bus& bus(int id) const { return buses[bus_index(id)]; }
  int slack_index() const;
};

// Rooted orientation of a validated radial network. Children are ordered by
// ascending bus id so constraint rows come out in a reproducible order.
struct RootedTree {
  int root_index = 0;                       // index of the slack bus
  std::vector<int> parent;                  // bus index -> parent bus index (-1 at root)
  std::vector<int> line_into;               // bus index -> line index entering it (-1 at root)
  std::vector<bool> line_points_down;       // line.from == parent for line_into
  std::vector<std::vector<int>> children;   // bus index -> child bus indices
  std::vector<int> depth;                   // root has depth 0
  std::vector<int> preorder;                // root-first traversal, children by id
};

// Checks radiality (|lines| = |buses| - 1, connected, unique slack at bus 0)
// and returns the rooted orientation.
// Errors: CycleDetected, Disconnected, MultipleSlack.
RootedTree validate_radial(const Network& net);

// Bus ids of the subtree rooted at `bus_id`, including it. Sorted ascending.
std::vector<int> subtree(const Network& net, const RootedTree& tree, int bus_id);

// Line indices on the unique path root -> bus_id; empty for the root.
std::vector<int> path_to_root(const Network& net, const RootedTree& tree, int bus_id);

}  // namespace gridplan
