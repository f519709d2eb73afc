#include "gridplan/network.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace gridplan {

const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::CycleDetected: return "CycleDetected";
    case ErrorKind::Disconnected: return "Disconnected";
    case ErrorKind::MultipleSlack: return "MultipleSlack";
    case ErrorKind::UnknownBus: return "UnknownBus";
    case ErrorKind::NegativeVoltageSquare: return "NegativeVoltageSquare";
    case ErrorKind::SingularImpedance: return "SingularImpedance";
    case ErrorKind::InvalidBounds: return "InvalidBounds";
    case ErrorKind::HorizonMismatch: return "HorizonMismatch";
    case ErrorKind::InvalidBudget: return "InvalidBudget";
    case ErrorKind::OracleTooLarge: return "OracleTooLarge";
    case ErrorKind::IterationLimit: return "IterationLimit";
    case ErrorKind::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorKind::NotOptimal: return "NotOptimal";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::CacheMismatch: return "CacheMismatch";
    case ErrorKind::EmptyCalibration: return "EmptyCalibration";
    case ErrorKind::EmptyTestSet: return "EmptyTestSet";
    case ErrorKind::MissingThreshold: return "MissingThreshold";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::SolveFailed: return "SolveFailed";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
  }
  return "UnknownError";
}

Complex3 alpha_plus() {
  const cplx a = phase_rotation();
  Complex3 v;
  v << cplx(1.0, 0.0), a, a * a;
  return v;
}

Matrix3C gamma_matrix() {
  const cplx a = phase_rotation();
  const cplx a2 = a * a;
  Matrix3C g;
  g << cplx(1, 0), a2, a,
       a, cplx(1, 0), a2,
       a2, a, cplx(1, 0);
  return g;
}

Matrix3C balanced_outer(double v_c) {
  if (v_c < 0.0 || !std::isfinite(v_c)) {
    throw Error(ErrorKind::NegativeVoltageSquare,
                "balanced_outer requires v_c >= 0, got " + std::to_string(v_c));
  }
  Complex3 ap = alpha_plus();
  return v_c * (ap * ap.adjoint());
}

bool is_invertible(const Matrix3C& y, double tol) {
  Eigen::JacobiSVD<Matrix3C> svd(y);
  const auto& sv = svd.singularValues();
  if (sv(0) <= 0.0) return false;
  return sv(2) > tol * sv(0);
}

bool is_hermitian(const Matrix3C& m, double tol) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

bool all_finite(const Matrix3C& m) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag())) return false;
  return true;
}

bool all_finite(const Complex3& v) {
  for (int i = 0; i < 3; ++i)
    if (!std::isfinite(v(i).real()) || !std::isfinite(v(i).imag())) return false;
  return true;
}

int Network::bus_index(int id) const {
  for (int i = 0; i < bus_count(); ++i)
    if (buses[i].id == id) return i;
  throw Error(ErrorKind::UnknownBus, "no bus with id " + std::to_string(id));
}

int Network::slack_index() const {
  for (int i = 0; i < bus_count(); ++i)
    if (buses[i].kind == BusKind::Slack) return i;
  throw Error(ErrorKind::MultipleSlack, "network has no slack bus");
}

RootedTree validate_radial(const Network& net) {
  const int nb = net.bus_count();
  if (nb == 0) throw Error(ErrorKind::Disconnected, "empty network");

  int slack_count = 0;
  int root = -1;
  for (int i = 0; i < nb; ++i) {
    if (net.buses[i].kind == BusKind::Slack) {
      ++slack_count;
      root = i;
    }
  }
  if (slack_count != 1) {
    throw Error(ErrorKind::MultipleSlack,
                "expected exactly one slack bus, found " + std::to_string(slack_count));
  }
  if (net.buses[root].id != 0) {
    throw Error(ErrorKind::MultipleSlack, "slack bus must have id 0");
  }

  if (net.line_count() != nb - 1) {
    throw Error(net.line_count() >= nb ? ErrorKind::CycleDetected : ErrorKind::Disconnected,
                "radial network needs |lines| = |buses| - 1, got " +
                    std::to_string(net.line_count()) + " lines for " +
                    std::to_string(nb) + " buses");
  }

  // Adjacency over bus indices; ids are resolved once here.
  std::unordered_map<int, int> index_of;
  for (int i = 0; i < nb; ++i) {
    if (index_of.count(net.buses[i].id)) {
      throw Error(ErrorKind::ValidationError,
                  "duplicate bus id " + std::to_string(net.buses[i].id));
    }
    index_of[net.buses[i].id] = i;
  }

  std::vector<std::vector<std::pair<int, int>>> adj(nb);  // (neighbor index, line index)
  for (int l = 0; l < net.line_count(); ++l) {
    const Line& ln = net.lines[l];
    auto fi = index_of.find(ln.from);
    auto ti = index_of.find(ln.to);
    if (fi == index_of.end() || ti == index_of.end()) {
      throw Error(ErrorKind::UnknownBus,
                  "line references unknown bus " +
                      std::to_string(fi == index_of.end() ? ln.from : ln.to));
    }
    if (ln.from == ln.to) {
      throw Error(ErrorKind::CycleDetected,
                  "self-loop at bus " + std::to_string(ln.from));
    }
    adj[fi->second].push_back({ti->second, l});
    adj[ti->second].push_back({fi->second, l});
  }

  RootedTree tree;
  tree.root_index = root;
  tree.parent.assign(nb, -1);
  tree.line_into.assign(nb, -1);
  tree.line_points_down.assign(nb, false);
  tree.children.assign(nb, {});
  tree.depth.assign(nb, 0);

  // Iterative DFS from the root; children visited in ascending bus-id order.
  std::vector<bool> seen(nb, false);
  std::vector<int> stack{root};
  seen[root] = true;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    tree.preorder.push_back(u);
    std::vector<std::pair<int, int>> nbrs;  // (bus id, line index)
    for (auto [v, l] : adj[u]) {
      if (v == tree.parent[u] && l == tree.line_into[u]) continue;
      nbrs.push_back({v, l});
    }
    std::sort(nbrs.begin(), nbrs.end(), [&](auto& a, auto& b) {
      return net.buses[a.first].id < net.buses[b.first].id;
    });
    for (auto it = nbrs.rbegin(); it != nbrs.rend(); ++it) {
      auto [v, l] = *it;
      if (seen[v]) {
        throw Error(ErrorKind::CycleDetected,
                    "cycle through bus " + std::to_string(net.buses[v].id));
      }
      seen[v] = true;
      tree.parent[v] = u;
      tree.line_into[v] = l;
      tree.line_points_down[v] = index_of[net.lines[l].from] == u;
      tree.depth[v] = tree.depth[u] + 1;
      stack.push_back(v);
    }
    for (auto& [v, l] : nbrs) tree.children[u].push_back(v);
  }

  for (int i = 0; i < nb; ++i) {
    if (!seen[i]) {
      throw Error(ErrorKind::Disconnected,
                  "bus " + std::to_string(net.buses[i].id) + " unreachable from slack");
    }
  }
  // preorder pushed parents before children but sibling order got reversed by
  // the stack; rebuild it from the child lists.
  tree.preorder.clear();
  std::vector<int> order_stack{root};
  while (!order_stack.empty()) {
    int u = order_stack.back();
    order_stack.pop_back();
    tree.preorder.push_back(u);
    for (auto it = tree.children[u].rbegin(); it != tree.children[u].rend(); ++it)
      order_stack.push_back(*it);
  }
  return tree;
}

std::vector<int> subtree(const Network& net, const RootedTree& tree, int bus_id) {
  int start = net.bus_index(bus_id);
  std::vector<int> ids;
  std::vector<int> stack{start};
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    ids.push_back(net.buses[u].id);
    for (int c : tree.children[u]) stack.push_back(c);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<int> path_to_root(const Network& net, const RootedTree& tree, int bus_id) {
  int u = net.bus_index(bus_id);
  std::vector<int> lines;
  while (tree.parent[u] != -1) {
    lines.push_back(tree.line_into[u]);
    u = tree.parent[u];
  }
  std::reverse(lines.begin(), lines.end());
  return lines;
}

}  // namespace gridplan
