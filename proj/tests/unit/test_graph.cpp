#include <algorithm>
#include <set>

#include "causalshift/errors.hpp"
#include "causalshift/graph.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace causalshift;

namespace {

// Acyclic iff repeatedly deleting sink-free... here: iff no node reaches itself.
bool reaches_itself(const BinaryMatrix& a) {
  const std::size_t n = a.size();
  std::vector<std::vector<bool>> r(n, std::vector<bool>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) r[j][i] = a(i, j);  // j -> i
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) r[i][j] = r[i][j] || (r[i][m] && r[m][j]);
  for (std::size_t i = 0; i < n; ++i)
    if (r[i][i]) return true;
  return false;
}

std::size_t shd_oracle(const BinaryMatrix& a, const BinaryMatrix& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (a(i, j) != b(i, j) || a(j, i) != b(j, i)) ++d;
  return d;
}

BinaryMatrix random_matrix(oracle::Gen& g, std::size_t n, double p) {
  BinaryMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && g.coin(p)) m.set(i, j);
  return m;
}

}  // namespace

TEST_CASE("ER graphs are acyclic with the expected edge count") {
  for (double d : {1.0, 2.0, 3.0}) {
    double edges = 0.0;
    const int reps = 400;
    for (int s = 0; s < reps; ++s) {
      Rng rng(static_cast<std::uint64_t>(s));
      const Dag dag = generate_er(10, d, rng);
      CHECK_FALSE(reaches_itself(dag.adjacency()));
      CHECK(is_acyclic(dag.adjacency()));
      edges += static_cast<double>(dag.edge_count());
    }
    // mean of a Binomial(45, 2d/9): tolerance ~5 standard errors
    const double mean = edges / reps;
    const double p = 2.0 * d / 9.0;
    const double se = std::sqrt(45.0 * p * (1 - p) / reps);
    CHECK(std::abs(mean - d * 10.0) < 5 * se);
  }
}

TEST_CASE("ER handles tiny graphs and clamps the edge probability") {
  Rng rng(0);
  CHECK_THROWS_AS(generate_er(1, 1.0, rng), ParameterError);
  CHECK(generate_er(2, 0.5, rng).edge_count() <= 1);
  CHECK(generate_er(4, 10.0, rng).edge_count() == 6);
}

TEST_CASE("presets") {
  CHECK(generate_preset(Preset::chain, 5).edge_count() == 4);
  CHECK(generate_preset(Preset::full, 5).edge_count() == 10);
  CHECK(generate_preset(Preset::collider, 5).edge_count() == 4);
  CHECK(generate_preset(Preset::tree, 7).edge_count() == 6);
  CHECK(generate_preset(Preset::bidiag, 5).edge_count() == 7);
  const Dag chain = generate_preset(Preset::chain, 3);
  CHECK(chain.has_edge(0, 1));
  CHECK(chain.has_edge(1, 2));
  CHECK(parents(chain, 2) == NodeSet{1});
  CHECK(children(chain, 0) == NodeSet{1});
  CHECK(roots(chain) == NodeSet{0});
  for (auto p : {Preset::chain, Preset::full, Preset::collider, Preset::tree, Preset::bidiag, Preset::jungle}) {
    CHECK(parse_preset(to_string(p)) == p);
    CHECK(is_acyclic(generate_preset(p, 9).adjacency()));
  }
  CHECK_THROWS_AS(parse_preset("ring"), ParameterError);
}

TEST_CASE("Dag rejects cycles and self loops") {
  BinaryMatrix m(3);
  m.set(1, 0);
  m.set(2, 1);
  m.set(0, 2);
  CHECK_THROWS_AS(Dag{m}, ParameterError);
  BinaryMatrix s(2);
  s.set(1, 1);
  CHECK_THROWS_AS(Dag{s}, ParameterError);
}

TEST_CASE("topological order respects every edge") {
  oracle::Gen g(8);
  for (int t = 0; t < 50; ++t) {
    Rng rng(g.rng());
    const Dag dag = generate_er(g.size(2, 12), g.real(0.5, 3.0), rng);
    const auto order = topological_order(dag);
    std::vector<std::size_t> pos(dag.size());
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    for (const Edge& e : dag.edges()) CHECK(pos[e.parent] < pos[e.child]);
  }
}

TEST_CASE("find_cycle returns a real cycle or nothing") {
  oracle::Gen g(21);
  for (int t = 0; t < 200; ++t) {
    const BinaryMatrix m = random_matrix(g, g.size(2, 7), g.real(0.05, 0.5));
    const auto cycle = find_cycle(m);
    CHECK(cycle.empty() == !reaches_itself(m));
    CHECK(is_acyclic(m) == cycle.empty());
    for (std::size_t i = 0; i < cycle.size(); ++i) {
      CHECK(m(cycle[i].child, cycle[i].parent));
      CHECK(cycle[i].child == cycle[(i + 1) % cycle.size()].parent);
    }
  }
}

TEST_CASE("SHD matches the pairwise oracle and is a metric") {
  oracle::Gen g(4);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = g.size(2, 8);
    const BinaryMatrix a = random_matrix(g, n, 0.3), b = random_matrix(g, n, 0.3), c = random_matrix(g, n, 0.3);
    CHECK(shd(a, b) == shd_oracle(a, b));
    CHECK(shd(a, b) == shd(b, a));
    CHECK(shd(a, a) == 0);
    CHECK(shd(a, c) <= shd(a, b) + shd(b, c));
  }
  const Dag x = Dag::from_edges(3, std::vector<Edge>{{0, 1}});
  const Dag y = Dag::from_edges(3, std::vector<Edge>{{1, 0}});
  CHECK(shd(x, y) == 1);
}

TEST_CASE("masks derived from a DAG") {
  const Dag dag = Dag::from_edges(3, std::vector<Edge>{{0, 1}, {0, 2}});
  const BinaryMatrix anti = anticausal_mask(dag);
  CHECK(anti(0, 1));
  CHECK(anti(0, 2));
  CHECK(anti.count() == 2);
  const BinaryMatrix skel = skeleton_mask(dag);
  CHECK(skel.count() == 4);
  CHECK(skel == skel.transposed());
}

TEST_CASE("edge list round trip") {
  oracle::Gen g(6);
  for (int t = 0; t < 30; ++t) {
    Rng rng(g.rng());
    const Dag dag = generate_er(g.size(2, 15), 2.0, rng);
    CHECK(parse_edge_list(to_edge_list(dag)) == dag);
  }
  CHECK_THROWS_AS(parse_edge_list("2\n0 5\n"), ParameterError);
  CHECK_THROWS_AS(parse_edge_list("2\n0 1\n1 0\n"), ParameterError);
}
