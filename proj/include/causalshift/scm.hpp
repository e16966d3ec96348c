#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "causalshift/data.hpp"
#include "causalshift/graph.hpp"
#include "causalshift/nn.hpp"
#include "causalshift/rng.hpp"

namespace causalshift {

inline constexpr std::size_t kScmHidden = 48;
inline constexpr double kScmWeightGain = 2.5;
inline constexpr double kScmBiasRange = 1.1;
inline constexpr std::size_t kDefaultCategories = 10;

/// Ground-truth data-generating process: one random MLP mechanism per node,
/// reading only the node's parents. Immutable after construction.
class GroundTruthScm {
 public:
  GroundTruthScm() = default;
  /// Mechanism i must model variable i with mask = parents of i.
  GroundTruthScm(Dag dag, std::size_t k, std::vector<MaskedMlp> mechanisms);

  const Dag& dag() const noexcept { return dag_; }
  std::size_t size() const noexcept { return dag_.size(); }
  std::size_t k() const noexcept { return k_; }
  const MaskedMlp& mechanism(std::size_t i) const { return mechanisms_.at(i); }
  std::span<const MaskedMlp> mechanisms() const noexcept { return mechanisms_; }
  const std::vector<std::size_t>& order() const noexcept { return order_; }

  /// p(X_i | parents) evaluated on a full assignment; non-parent entries of
  /// the assignment are ignored.
  std::vector<double> cpd(std::size_t i, std::span<const int> assignment) const;

  friend bool operator==(const GroundTruthScm& a, const GroundTruthScm& b) {
    return a.dag_ == b.dag_ && a.k_ == b.k_ && a.mechanisms_ == b.mechanisms_;
  }

 private:
  Dag dag_;
  std::size_t k_ = 0;
  std::vector<MaskedMlp> mechanisms_;
  std::vector<std::size_t> order_;
};

/// Scaled (semi-)orthogonal matrix: rows x cols row-major. The smaller
/// dimension is orthonormalized from a Gaussian draw, then multiplied by
/// `gain`, so every entry lies in [-gain, gain].
std::vector<double> orthogonal_matrix(std::size_t rows, std::size_t cols, double gain, Rng& rng);

/// Random mechanisms: orthogonal weights with gain 2.5, biases U[-1.1, 1.1],
/// hidden width 48.
GroundTruthScm init_scm(const Dag& dag, std::size_t k, Rng& rng, std::size_t hidden = kScmHidden);

/// Ancestral sampling in topological order.
Dataset sample_observational(const GroundTruthScm& scm, std::size_t count, Rng& rng);

/// Ancestral sampling with the target's mechanism replaced by a point mass
/// (fixed value) or by U[0, K) redrawn per sample (value absent).
Dataset sample_interventional(const GroundTruthScm& scm, const Intervention& intervention,
                              std::size_t count, Rng& rng);

struct TrainingData {
  Dataset observational;
  std::vector<Dataset> interventional;
};

/// n_obs observational samples plus n_int interventional samples split into
/// min(n, n_int) datasets. Dataset l targets node l and fixes one value drawn
/// uniformly; sizes differ by at most one.
TrainingData make_training_data(const GroundTruthScm& scm, std::size_t n_obs, std::size_t n_int,
                                Rng& rng);

/// Held-out interventional suite: `datasets` fixed-value interventions (or
/// uniform-mode ones when `uniform` is set). Targets walk a random
/// permutation of the nodes, values are uniform.
std::vector<Dataset> make_test_suite(const GroundTruthScm& scm, std::size_t datasets,
                                     std::size_t samples_per_dataset, Rng& rng, bool uniform = false);

/// Per-variable mean NLL of the unmodified ground-truth mechanisms.
std::vector<double> bound_zero_shot(const GroundTruthScm& scm, const Dataset& data);

/// As bound_zero_shot, but the intervened variable is scored under the true
/// intervention distribution (0 for a point mass, ln K for uniform).
std::vector<double> bound_adaptation(const GroundTruthScm& scm, const Dataset& data);

}  // namespace causalshift
