#include "causalshift/graph.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <sstream>

#include "causalshift/errors.hpp"

namespace causalshift {

std::size_t BinaryMatrix::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMatrix BinaryMatrix::transposed() const {
  BinaryMatrix t(n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) t.set(j, i, (*this)(i, j));
  return t;
}

Dag::Dag(std::size_t n) : adj_(n) {}

Dag::Dag(BinaryMatrix adjacency) : adj_(std::move(adjacency)) {
  for (std::size_t i = 0; i < adj_.size(); ++i) {
    if (adj_(i, i)) throw ParameterError("adjacency has a self-loop at node " + std::to_string(i));
  }
  if (!is_acyclic(adj_)) throw ParameterError("adjacency contains a directed cycle");
}

Dag Dag::from_edges(std::size_t n, std::span<const Edge> edges) {
  BinaryMatrix adj(n);
  for (const Edge& e : edges) {
    if (e.parent >= n || e.child >= n) throw ParameterError("edge endpoint out of range");
    adj.set(e.child, e.parent);
  }
  return Dag(std::move(adj));
}

std::vector<Edge> Dag::edges() const {
  std::vector<Edge> out;
  const std::size_t n = size();
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t c = 0; c < n; ++c)
      if (adj_(c, p)) out.push_back({p, c});
  return out;
}

std::vector<Edge> find_cycle(const BinaryMatrix& adj) {
  // Iterative DFS with three colours; an edge into a grey node closes a cycle.
  const std::size_t n = adj.size();
  enum : std::uint8_t { white, grey, black };
  std::vector<std::uint8_t> colour(n, white);
  std::vector<std::pair<std::size_t, std::size_t>> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (colour[start] != white) continue;
    stack.emplace_back(start, 0);
    colour[start] = grey;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      // Successors of node are its children: c with adj(c, node) = 1.
      while (next < n && !adj(next, node)) ++next;
      if (next == n) {
        colour[node] = black;
        stack.pop_back();
        continue;
      }
      const std::size_t child = next++;
      if (colour[child] == grey) {
        std::vector<Edge> cycle;
        std::size_t pos = stack.size();
        while (stack[pos - 1].first != child) --pos;
        for (std::size_t s = pos - 1; s + 1 < stack.size(); ++s)
          cycle.push_back({stack[s].first, stack[s + 1].first});
        cycle.push_back({stack.back().first, child});
        return cycle;
      }
      if (colour[child] == white) {
        colour[child] = grey;
        stack.emplace_back(child, 0);
      }
    }
  }
  return {};
}

bool is_acyclic(const BinaryMatrix& adj) { return find_cycle(adj).empty(); }

Dag generate_er(std::size_t n, double density, Rng& rng) {
  if (n < 2) throw ParameterError("generate_er requires n >= 2");
  if (!(density > 0.0)) throw ParameterError("generate_er requires density > 0");
  const double p = std::min(1.0, 2.0 * density / static_cast<double>(n - 1));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  BinaryMatrix adj(n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (uniform01(rng) < p) adj.set(order[b], order[a]);
  return Dag(std::move(adj));
}

Preset parse_preset(std::string_view name) {
  if (name == "chain") return Preset::chain;
  if (name == "full") return Preset::full;
  if (name == "collider") return Preset::collider;
  if (name == "tree") return Preset::tree;
  if (name == "bidiag") return Preset::bidiag;
  if (name == "jungle") return Preset::jungle;
  throw ParameterError("unknown graph preset '" + std::string(name) + "'");
}

std::string_view to_string(Preset preset) noexcept {
  switch (preset) {
    case Preset::chain: return "chain";
    case Preset::full: return "full";
    case Preset::collider: return "collider";
    case Preset::tree: return "tree";
    case Preset::bidiag: return "bidiag";
    case Preset::jungle: return "jungle";
  }
  return "unknown";
}

Dag generate_preset(Preset preset, std::size_t n) {
  if (n < 2) throw ParameterError("generate_preset requires n >= 2");
  BinaryMatrix adj(n);
  auto edge = [&](std::size_t parent, std::size_t child) { adj.set(child, parent); };
  switch (preset) {
    case Preset::chain:
      for (std::size_t i = 0; i + 1 < n; ++i) edge(i, i + 1);
      break;
    case Preset::full:
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) edge(i, j);
      break;
    case Preset::collider:
      for (std::size_t i = 0; i + 1 < n; ++i) edge(i, n - 1);
      break;
    case Preset::tree:
    case Preset::jungle:
      for (std::size_t i = 1; i < n; ++i) {
        const std::size_t parent = (i - 1) / 2;
        edge(parent, i);
        if (preset == Preset::jungle && parent >= 1) edge((parent - 1) / 2, i);
      }
      break;
    case Preset::bidiag:
      for (std::size_t i = 0; i + 1 < n; ++i) {
        edge(i, i + 1);
        if (i + 2 < n) edge(i, i + 2);
      }
      break;
  }
  return Dag(std::move(adj));
}

std::vector<std::size_t> topological_order(const BinaryMatrix& adj) {
  const std::size_t n = adj.size();
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) indegree[i] += adj(i, j) ? 1 : 0;

  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);

  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    const std::size_t node = ready.top();
    ready.pop();
    order.push_back(node);
    for (std::size_t c = 0; c < n; ++c)
      if (adj(c, node) && --indegree[c] == 0) ready.push(c);
  }
  if (order.size() != n) throw StructuralError("cycle detected during topological sort");
  return order;
}

std::vector<std::size_t> topological_order(const Dag& dag) {
  return topological_order(dag.adjacency());
}

namespace {

void check_node(const Dag& dag, std::size_t i) {
  if (i >= dag.size())
    throw ParameterError("node index " + std::to_string(i) + " out of range for graph of size " +
                         std::to_string(dag.size()));
}

}  // namespace

NodeSet parents(const Dag& dag, std::size_t i) {
  check_node(dag, i);
  NodeSet out;
  for (std::size_t j = 0; j < dag.size(); ++j)
    if (dag.adjacency()(i, j)) out.push_back(j);
  return out;
}

NodeSet children(const Dag& dag, std::size_t i) {
  check_node(dag, i);
  NodeSet out;
  for (std::size_t j = 0; j < dag.size(); ++j)
    if (dag.adjacency()(j, i)) out.push_back(j);
  return out;
}

NodeSet roots(const Dag& dag) {
  NodeSet out;
  for (std::size_t i = 0; i < dag.size(); ++i) {
    const auto row = dag.adjacency().row(i);
    if (std::none_of(row.begin(), row.end(), [](std::uint8_t b) { return b != 0; }))
      out.push_back(i);
  }
  return out;
}

BinaryMatrix anticausal_mask(const Dag& dag) { return dag.adjacency().transposed(); }

BinaryMatrix skeleton_mask(const Dag& dag) {
  const BinaryMatrix& a = dag.adjacency();
  BinaryMatrix s(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) s.set(i, j, a(i, j) || a(j, i));
  return s;
}

std::size_t shd(const BinaryMatrix& a, const BinaryMatrix& b) {
  if (a.size() != b.size()) throw ParameterError("shd: dimension mismatch");
  std::size_t distance = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (a(i, j) != b(i, j) || a(j, i) != b(j, i)) ++distance;
  return distance;
}

std::string to_edge_list(const Dag& dag) {
  std::ostringstream os;
  os << dag.size() << '\n';
  for (const Edge& e : dag.edges()) os << e.parent << ' ' << e.child << '\n';
  return os.str();
}

Dag parse_edge_list(std::string_view text) {
  std::istringstream is{std::string(text)};
  long long n = -1;
  if (!(is >> n) || n < 0) throw ParameterError("edge list: missing node count");
  std::vector<Edge> edges;
  long long p = 0;
  long long c = 0;
  while (is >> p) {
    if (!(is >> c)) throw ParameterError("edge list: dangling parent without child");
    if (p < 0 || c < 0) throw ParameterError("edge list: negative node index");
    edges.push_back({static_cast<std::size_t>(p), static_cast<std::size_t>(c)});
  }
  if (!is.eof()) throw ParameterError("edge list: malformed entry");
  return Dag::from_edges(static_cast<std::size_t>(n), edges);
}

}  // namespace causalshift
