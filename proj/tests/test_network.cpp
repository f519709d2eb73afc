#include <Eigen/Eigenvalues>
#include <set>

#include "doctest.h"
#include "gridplan/network.hpp"

using namespace gridplan;

namespace {

Network chain(int n_buses) {
  Network net;
  for (int i = 0; i < n_buses; ++i) {
    Bus b;
    b.id = i;
    b.kind = i == 0 ? BusKind::Slack : BusKind::Load;
    net.buses.push_back(b);
  }
  for (int i = 0; i + 1 < n_buses; ++i) {
    Line l;
    l.from = i;
    l.to = i + 1;
    l.y_fwd = l.y_rev = Matrix3C::Identity() * cplx(10.0, -30.0);
    net.lines.push_back(l);
  }
  return net;
}

}  // namespace

TEST_CASE("gamma matrix equals the rank-1 outer product") {
  Matrix3C g = gamma_matrix();
  Complex3 ap = alpha_plus();
  Matrix3C outer = ap * ap.adjoint();
  CHECK((g - outer).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(g(0, 0) == cplx(1.0, 0.0));
  cplx a = phase_rotation();
  CHECK(std::abs(g(1, 0) - a) < 1e-15);

  Eigen::JacobiSVD<Matrix3C> svd(g);
  CHECK(svd.singularValues()(1) < 1e-12);  // rank 1
}

TEST_CASE("balanced_outer") {
  CHECK(balanced_outer(0.0).cwiseAbs().maxCoeff() == 0.0);

  Matrix3C a1 = balanced_outer(1.0);
  CHECK(std::abs(a1.trace().real() - 3.0) < 1e-12);
  CHECK(is_hermitian(a1));

  double vc = 1.05 * 1.05;
  Matrix3C av = balanced_outer(vc);
  for (int p = 0; p < 3; ++p) CHECK(std::abs(av(p, p).real() - 1.1025) < 1e-12);

  // eigenvalues in {0, 3 vc}
  Eigen::SelfAdjointEigenSolver<Matrix3C> es(av);
  CHECK(std::abs(es.eigenvalues()(0)) < 1e-12);
  CHECK(std::abs(es.eigenvalues()(1)) < 1e-12);
  CHECK(std::abs(es.eigenvalues()(2) - 3.0 * vc) < 1e-10);

  CHECK_THROWS_AS(balanced_outer(-0.1), Error);
}

TEST_CASE("is_invertible") {
  CHECK(is_invertible(Matrix3C::Identity(), 1e-9));
  Matrix3C dead = Matrix3C::Identity();
  dead.row(1).setZero();
  CHECK_FALSE(is_invertible(dead, 1e-9));

  // random full-rank complex matrix, checked against the determinant
  Matrix3C r;
  r << cplx(1.2, 0.3), cplx(-0.1, 0.7), cplx(0.4, -0.2),
       cplx(0.0, 1.1), cplx(2.2, -0.4), cplx(-0.3, 0.1),
       cplx(0.5, 0.5), cplx(0.2, -0.9), cplx(1.7, 0.8);
  CHECK(std::abs(r.determinant()) > 1e-6);
  CHECK(is_invertible(r, 1e-9));
}

TEST_CASE("validate_radial on a minimal tree") {
  Network net = chain(2);
  RootedTree t = validate_radial(net);
  CHECK(t.root_index == 0);
  CHECK(t.parent[1] == 0);
  CHECK(t.depth[1] == 1);
}

TEST_CASE("cycle detection") {
  Network net = chain(3);
  Line extra;
  extra.from = 2;
  extra.to = 0;
  extra.y_fwd = extra.y_rev = Matrix3C::Identity();
  net.lines.push_back(extra);
  CHECK_THROWS_WITH_AS(validate_radial(net), doctest::Contains("CycleDetected"), Error);
}

TEST_CASE("disconnected network") {
  Network net = chain(4);
  net.lines.pop_back();
  Line dup;
  dup.from = 1;
  dup.to = 2;
  dup.y_fwd = dup.y_rev = Matrix3C::Identity();
  net.lines.push_back(dup);  // keeps |lines| = n-1 but bus 3 unreachable
  CHECK_THROWS_AS(validate_radial(net), Error);
}

TEST_CASE("multiple slack buses") {
  Network net = chain(3);
  net.buses[1].kind = BusKind::Slack;
  CHECK_THROWS_WITH_AS(validate_radial(net), doctest::Contains("slack"), Error);
}

TEST_CASE("8-bus chain has depth 7") {
  Network net = chain(8);
  RootedTree t = validate_radial(net);
  int maxd = 0;
  for (int d : t.depth) maxd = std::max(maxd, d);
  CHECK(maxd == 7);
  auto path = path_to_root(net, t, 7);
  CHECK(static_cast<int>(path.size()) == 7);
}

TEST_CASE("subtree") {
  Network net = chain(5);
  RootedTree t = validate_radial(net);

  CHECK(subtree(net, t, 4) == std::vector<int>{4});           // leaf
  CHECK(subtree(net, t, 3) == std::vector<int>{3, 4});        // mid-chain
  CHECK(subtree(net, t, 0) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(subtree(net, t, 9), Error);

  // star rooted at 0
  Network star;
  for (int i = 0; i < 5; ++i) {
    Bus b;
    b.id = i;
    b.kind = i == 0 ? BusKind::Slack : BusKind::Load;
    star.buses.push_back(b);
  }
  for (int i = 1; i < 5; ++i) {
    Line l;
    l.from = 0;
    l.to = i;
    l.y_fwd = l.y_rev = Matrix3C::Identity();
    star.lines.push_back(l);
  }
  RootedTree st = validate_radial(star);
  CHECK(subtree(star, st, 0).size() == 5);

  // sibling subtrees partition the non-root buses
  auto s1 = subtree(star, st, 1);
  auto s2 = subtree(star, st, 2);
  for (int a : s1)
    for (int b : s2) CHECK(a != b);

  // children subtrees plus the root tile the whole bus set
  std::set<int> tiled{0};
  for (int c : st.children[st.root_index])
    for (int id : subtree(star, st, star.buses[c].id)) {
      CHECK(tiled.insert(id).second);  // no overlap
    }
  CHECK(tiled.size() == star.buses.size());
}

TEST_CASE("path_to_root") {
  Network net = chain(3);
  RootedTree t = validate_radial(net);
  CHECK(path_to_root(net, t, 0).empty());
  auto p = path_to_root(net, t, 2);
  REQUIRE(p.size() == 2);
  CHECK(net.lines[p[0]].from == 0);  // first line leaves the slack
  CHECK(net.lines[p[1]].to == 2);    // last line enters the target
}

TEST_CASE("reversed line orientation still roots correctly") {
  Network net = chain(3);
  std::swap(net.lines[1].from, net.lines[1].to);  // stored as 2 -> 1
  RootedTree t = validate_radial(net);
  CHECK(t.parent[2] == 1);
  CHECK_FALSE(t.line_points_down[2]);
  CHECK(subtree(net, t, 1) == std::vector<int>{1, 2});
}
