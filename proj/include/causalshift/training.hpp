#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "causalshift/data.hpp"
#include "causalshift/graph.hpp"
#include "causalshift/nn.hpp"

namespace causalshift {

/// Datasets up to this size are used whole; larger ones are minibatched.
inline constexpr std::size_t kFullBatchLimit = 2000;
inline constexpr std::size_t kDefaultMinibatch = 256;

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 0.0;
  std::size_t iterations = 1000;
  std::size_t batch_size = 0;  ///< 0: automatic (see kFullBatchLimit)
  double inner_lr = 0.1;
  std::size_t inner_steps = 1;
  std::size_t tasks_per_iteration = 20;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::size_t resolve_batch_size(const TrainConfig& cfg, std::size_t dataset_size);

struct TraceEntry {
  std::size_t round = 0;
  std::size_t iteration = 0;
  std::size_t module = 0;
  double loss = 0.0;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

/// Per-step training loss, one entry per (round, iteration, module).
using LossTrace = std::vector<TraceEntry>;

/// CSV with header `round,iteration,module,loss`.
std::string trace_to_csv(const LossTrace& trace);

/// Every module reads every other variable.
BinaryMatrix pseudo_ll_mask(std::size_t n);

enum class ExpertMode { causal, anticausal, skeleton };

ExpertMode parse_expert_mode(std::string_view name);
std::string_view to_string(ExpertMode mode) noexcept;
BinaryMatrix expert_mask(const Dag& dag, ExpertMode mode);

/// Sets the stack's masks and fits every module independently by Adam on
/// the mean NLL of `data`. Each module uses its own batch stream derived from
/// cfg.seed, so results do not depend on module order.
LossTrace train_with_mask(ModelStack& stack, const BinaryMatrix& masks, const SampleMatrix& data,
                          const TrainConfig& cfg);

LossTrace train_pseudo_ll(ModelStack& stack, const SampleMatrix& observational, const TrainConfig& cfg);

LossTrace train_expert(ModelStack& stack, const Dag& dag, ExpertMode mode,
                       const SampleMatrix& observational, const TrainConfig& cfg);

/// First-order meta-learning over intervention datasets with the pseudo-LL
/// masks. Each outer iteration draws cfg.tasks_per_iteration datasets, splits
/// each one in half, takes cfg.inner_steps SGD steps (cfg.inner_lr) on the
/// first half and accumulates the gradient of the second half at the adapted
/// parameters. The averaged gradient drives an Adam step.
LossTrace train_maml(ModelStack& stack, std::span<const Dataset> tasks, const TrainConfig& cfg);

/// Same task draws and Adam steps as train_maml but with no inner loop:
/// gradients are taken at the current parameters. With inner_lr = 0 both
/// functions produce identical parameters.
LossTrace train_pseudo_ll_on_tasks(ModelStack& stack, std::span<const Dataset> tasks,
                                   const TrainConfig& cfg);

double sigmoid(double x) noexcept;
double logit(double p);

/// Structural parameters: edge j -> i is present with probability
/// sigmoid(u(i,j)) * sigmoid(v(i,j)). The diagonal is always 0.
class SoftAdjacency {
 public:
  SoftAdjacency() = default;
  /// All off-diagonal logits set to `logit_value`.
  explicit SoftAdjacency(std::size_t n, double logit_value = 0.0);
  /// Off-diagonal edge probability at most p, as close to p as doubles allow.
  static SoftAdjacency with_probability(std::size_t n, double p);
  /// Saturated at the given matrix: probability 1 where set, 0 elsewhere.
  static SoftAdjacency saturated(const BinaryMatrix& adj);

  std::size_t size() const noexcept { return n_; }
  double& u(std::size_t i, std::size_t j) { return u_[i * n_ + j]; }
  double u(std::size_t i, std::size_t j) const { return u_[i * n_ + j]; }
  double& v(std::size_t i, std::size_t j) { return v_[i * n_ + j]; }
  double v(std::size_t i, std::size_t j) const { return v_[i * n_ + j]; }

  double probability(std::size_t i, std::size_t j) const noexcept;
  /// Row-major n x n probabilities.
  std::vector<double> probabilities() const;

  const std::vector<double>& u_values() const noexcept { return u_; }
  const std::vector<double>& v_values() const noexcept { return v_; }
  std::vector<double>& u_values() noexcept { return u_; }
  std::vector<double>& v_values() noexcept { return v_; }

  friend bool operator==(const SoftAdjacency&, const SoftAdjacency&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> u_;
  std::vector<double> v_;
};

/// One Bernoulli draw per off-diagonal entry, row-major.
BinaryMatrix sample_masks(const SoftAdjacency& gamma, Rng& rng);

struct GraphFitConfig {
  double lr_u = 0.005;
  double lr_v = 0.02;
  std::size_t iterations = 100;
  std::size_t graphs_per_update = 100;
  std::size_t batch_size = 16;
  std::optional<double> lambda_sparse;  ///< default 0.004 * ln K
  std::size_t rounds = 30;
  std::uint64_t seed = 0;

  friend bool operator==(const GraphFitConfig&, const GraphFitConfig&) = default;
};

double resolve_lambda(const GraphFitConfig& cfg, std::size_t k);

/// Trains every module on observational batches, drawing module i's input
/// mask from row i of gamma at every step.
LossTrace distribution_fitting_phase(ModelStack& stack, const SoftAdjacency& gamma,
                                     const SampleMatrix& observational, const TrainConfig& cfg,
                                     std::size_t round = 0);

/// Updates gamma with a score-function gradient estimated on intervention
/// datasets. The intervened module is left out of the likelihood term.
void graph_fitting_phase(SoftAdjacency& gamma, const ModelStack& stack,
                         std::span<const Dataset> interventional, const GraphFitConfig& cfg,
                         std::size_t round = 0);

struct ExtractedGraph {
  Dag dag;
  bool repaired = false;       ///< cycles had to be broken
  std::size_t removed_edges = 0;
};

/// Edges with probability > threshold; cycles are broken by repeatedly
/// dropping the least probable edge on a detected cycle.
ExtractedGraph extract_graph(const SoftAdjacency& gamma, double threshold = 0.5);

struct LCausalResult {
  SoftAdjacency gamma;
  ExtractedGraph graph;
  LossTrace trace;
  std::vector<std::vector<double>> gamma_history;  ///< probabilities after each round
};

/// Alternates distribution fitting and graph fitting for gf.rounds rounds,
/// then installs the extracted graph as the stack's masks.
LCausalResult train_l_causal(ModelStack& stack, const SampleMatrix& observational,
                             std::span<const Dataset> interventional, const TrainConfig& cfg,
                             const GraphFitConfig& gf);

}  // namespace causalshift
