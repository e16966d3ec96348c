#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "causalshift/data.hpp"
#include "causalshift/graph.hpp"
#include "causalshift/nn.hpp"
#include "causalshift/scm.hpp"

namespace causalshift {

/// Role of every node relative to one intervention target.
///
/// A node may be both a (non-root) parent of the target and part of the
/// remainder; the other labels are exclusive. The intervened node is never
/// counted as root, parent or remainder.
struct NodeCategory {
  std::size_t target = 0;
  std::vector<std::uint8_t> root;       ///< no parents in the true graph, not the target
  std::vector<std::uint8_t> parent;     ///< parent of the target and not a root
  std::vector<std::uint8_t> remainder;  ///< neither root nor target
};

NodeCategory categorize(const Dag& dag, std::size_t target);

struct RecordMetadata {
  std::string model;
  std::string graph_type;
  std::size_t n = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t train_samples = 0;
  std::size_t adapt_samples = 0;
  std::size_t step = 0;
};

/// Dissected NLL (nats). Category means are absent when no dataset had a
/// non-empty category.
struct EvalRecord {
  double nll_mean = 0.0;
  double nll_intervention = 0.0;
  std::optional<double> nll_root;
  std::optional<double> nll_parents;
  std::optional<double> nll_remainder;
  std::optional<std::size_t> shd;
  std::optional<double> grad_norm_intervened;
  std::optional<double> grad_norm_others;
  RecordMetadata metadata;
};

/// Per-variable mean NLL on one intervention dataset.
struct DatasetNll {
  std::size_t target = 0;
  std::vector<double> per_variable;
};

/// Averages within each dataset first, then across datasets with equal
/// weight. Datasets with an empty category do not contribute to it.
EvalRecord aggregate(const Dag& dag_true, std::span<const DatasetNll> results);

/// Per-variable NLL of a stack on each test set, dissected by node role.
EvalRecord evaluate(const ModelStack& stack, const Dag& dag_true, std::span<const Dataset> tests);

/// (Bound-ZeroShot, Bound-Adaptation) records from the ground truth.
std::pair<EvalRecord, EvalRecord> evaluate_bounds(const GroundTruthScm& scm, std::span<const Dataset> tests);

}  // namespace causalshift
