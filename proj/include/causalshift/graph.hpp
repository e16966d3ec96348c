#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "causalshift/rng.hpp"

namespace causalshift {

/// Square 0/1 matrix stored row-major. Used for adjacency and input masks.
///
/// Convention shared by the whole library: entry (i, j) is 1 iff node j is
/// an input of node i, i.e. j is a parent of i in an adjacency matrix, or
/// module i reads variable j in a mask matrix.
class BinaryMatrix {
 public:
  BinaryMatrix() = default;
  explicit BinaryMatrix(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const noexcept { return n_; }

  bool operator()(std::size_t i, std::size_t j) const noexcept {
    return bits_[i * n_ + j] != 0;
  }
  void set(std::size_t i, std::size_t j, bool value = true) noexcept {
    bits_[i * n_ + j] = value ? 1 : 0;
  }

  std::span<const std::uint8_t> row(std::size_t i) const noexcept {
    return {bits_.data() + i * n_, n_};
  }

  std::size_t count() const noexcept;
  BinaryMatrix transposed() const;

  friend bool operator==(const BinaryMatrix&, const BinaryMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Sorted, duplicate-free list of node indices.
using NodeSet = std::vector<std::size_t>;

/// A directed edge parent -> child.
struct Edge {
  std::size_t parent;
  std::size_t child;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Directed acyclic graph over n nodes. Acyclicity and the empty diagonal
/// are checked on construction, so every Dag instance is valid.
class Dag {
 public:
  /// Empty graph with n nodes.
  explicit Dag(std::size_t n = 0);
  /// Throws ParameterError if adj has self-loops or a cycle.
  explicit Dag(BinaryMatrix adjacency);

  static Dag from_edges(std::size_t n, std::span<const Edge> edges);

  std::size_t size() const noexcept { return adj_.size(); }
  const BinaryMatrix& adjacency() const noexcept { return adj_; }
  bool has_edge(std::size_t parent, std::size_t child) const noexcept {
    return adj_(child, parent);
  }
  std::size_t edge_count() const noexcept { return adj_.count(); }
  /// Edges sorted by (parent, child).
  std::vector<Edge> edges() const;

  friend bool operator==(const Dag&, const Dag&) = default;

 private:
  BinaryMatrix adj_;
};

bool is_acyclic(const BinaryMatrix& adj);

/// Edges of one directed cycle, or an empty vector if adj is acyclic.
std::vector<Edge> find_cycle(const BinaryMatrix& adj);

/// Erdos-Renyi DAG with expected edge count density * n.
///
/// Nodes are put in a uniformly random order and each forward pair gets an
/// edge with probability p = 2 * density / (n - 1), clamped to 1.
Dag generate_er(std::size_t n, double density, Rng& rng);

/// Structured topologies.
///   chain:    i -> i+1
///   full:     i -> j for all i < j
///   collider: i -> n-1 for all i < n-1
///   tree:     floor((i-1)/2) -> i  (binary tree rooted at 0)
///   bidiag:   i -> i+1 and i -> i+2
///   jungle:   tree edges plus grandparent -> i
enum class Preset { chain, full, collider, tree, bidiag, jungle };

Preset parse_preset(std::string_view name);
std::string_view to_string(Preset preset) noexcept;
Dag generate_preset(Preset preset, std::size_t n);

/// Kahn's algorithm, smallest ready index first. Throws StructuralError on a
/// cycle (cannot happen for a valid Dag).
std::vector<std::size_t> topological_order(const Dag& dag);
std::vector<std::size_t> topological_order(const BinaryMatrix& adj);

NodeSet parents(const Dag& dag, std::size_t i);
NodeSet children(const Dag& dag, std::size_t i);
NodeSet roots(const Dag& dag);

/// Transpose of the adjacency: module i reads the children of i.
BinaryMatrix anticausal_mask(const Dag& dag);
/// Adjacency OR its transpose: module i reads parents and children of i.
BinaryMatrix skeleton_mask(const Dag& dag);

/// Structural Hamming distance. Each unordered pair {i, j} whose edge state
/// (absent, i->j, j->i) differs counts once, so a reversal costs 1.
std::size_t shd(const BinaryMatrix& a, const BinaryMatrix& b);
inline std::size_t shd(const Dag& a, const Dag& b) {
  return shd(a.adjacency(), b.adjacency());
}

/// Plain-text edge list: node count on the first line, then one
/// "parent child" pair per line.
std::string to_edge_list(const Dag& dag);
Dag parse_edge_list(std::string_view text);

}  // namespace causalshift
