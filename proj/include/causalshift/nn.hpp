#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "causalshift/data.hpp"
#include "causalshift/graph.hpp"
#include "causalshift/rng.hpp"

namespace causalshift {

inline constexpr std::size_t kModelHidden = 64;
inline constexpr double kLeakySlope = 0.1;

/// Parameters of one masked MLP, also used as the gradient container.
///
/// w1 is (n*k) x hidden and w2 is hidden x k, both row-major, so the
/// contribution of variable v taking category c is the contiguous row
/// w1[(v*k + c) * hidden ...].
struct MlpParams {
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  std::vector<double> b2;

  MlpParams() = default;
  MlpParams(std::size_t inputs, std::size_t hidden, std::size_t k)
      : w1(inputs * hidden, 0.0), b1(hidden, 0.0), w2(hidden * k, 0.0), b2(k, 0.0) {}

  std::size_t size() const noexcept { return w1.size() + b1.size() + w2.size() + b2.size(); }

  template <class F>
  void for_each_array(F&& f) {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
  }
  template <class F>
  void for_each_array(F&& f) const {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
  }

  /// Flat view index -> value; order is w1, b1, w2, b2.
  double& at(std::size_t flat);
  double at(std::size_t flat) const;

  MlpParams& operator+=(const MlpParams& other);
  MlpParams& operator*=(double factor);

  friend bool operator==(const MlpParams&, const MlpParams&) = default;

 private:
  const double& ref(std::size_t flat) const;
};

using Gradients = MlpParams;

/// L2 norm over all gradient entries of one module.
double grad_norm(const Gradients& grads);

struct BackwardResult {
  Gradients grads;
  double mean_nll = 0.0;
};

/// One-hidden-layer network modelling p(X_variable | X, mask).
///
/// The input is the one-hot encoding of all n variables; blocks of
/// variables whose mask bit is 0 are zeroed. Hidden units use a leaky ReLU
/// with slope 0.1 and the output is a log-softmax over k categories.
class MaskedMlp {
 public:
  MaskedMlp() = default;
  MaskedMlp(std::size_t n, std::size_t k, std::size_t variable, std::size_t hidden = kModelHidden);

  std::size_t n() const noexcept { return n_; }
  std::size_t k() const noexcept { return k_; }
  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t variable() const noexcept { return variable_; }

  std::span<const std::uint8_t> mask() const noexcept { return mask_; }
  /// Throws ParameterError on a size mismatch or if the module would read
  /// its own variable.
  void set_mask(std::span<const std::uint8_t> mask);

  MlpParams& params() noexcept { return params_; }
  const MlpParams& params() const noexcept { return params_; }

  /// Log-probabilities over the k categories of this module's variable.
  std::vector<double> forward(std::span<const int> x) const;
  std::vector<double> forward(std::span<const int> x, std::span<const std::uint8_t> mask) const;

  /// -log p(x[variable] | x).
  double nll(std::span<const int> x) const;
  double nll(std::span<const int> x, std::span<const std::uint8_t> mask) const;

  double mean_nll(const SampleMatrix& batch) const;
  double mean_nll(const SampleMatrix& batch, std::span<const std::uint8_t> mask) const;

  /// Exact gradient of the batch-mean NLL. Throws ParameterError on an
  /// empty batch.
  BackwardResult backward(const SampleMatrix& batch) const;
  BackwardResult backward(const SampleMatrix& batch, std::span<const std::uint8_t> mask) const;

  /// For every j != variable and every sample, adds NLL(x | mask with bit j
  /// set) minus NLL(x | mask with bit j cleared) to contrast[j]; the other
  /// bits stay as in `mask`. contrast[variable] is left untouched.
  void accumulate_edge_contrasts(const SampleMatrix& batch, std::span<const std::uint8_t> mask,
                                 std::span<double> contrast) const;

  friend bool operator==(const MaskedMlp&, const MaskedMlp&) = default;

 private:
  void check_sample(std::span<const int> x) const;
  void check_mask(std::span<const std::uint8_t> mask) const;
  // pre-activation of the hidden layer; returns nothing, fills pre.
  void hidden_pre(std::span<const int> x, std::span<const std::uint8_t> mask, double* pre) const;
  // log-softmax output from pre-activations; fills act and logp.
  void output_from_pre(const double* pre, double* act, double* logp) const;
  void forward_block(const SampleMatrix& batch, std::size_t begin, std::size_t rows,
                     std::span<const std::uint8_t> mask, double* pre, double* act, double* logp) const;

  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::size_t hidden_ = 0;
  std::size_t variable_ = 0;
  std::vector<std::uint8_t> mask_;
  MlpParams params_;
};

/// Glorot-uniform weights, zero biases.
void init_glorot(MaskedMlp& mlp, Rng& rng);

struct OptimizerConfig {
  enum class Kind { sgd, adam };
  Kind kind = Kind::adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  ///< decoupled, applied as lr * wd * theta

  static OptimizerConfig sgd(double lr) { return {Kind::sgd, lr}; }
  static OptimizerConfig adam(double lr, double weight_decay = 0.0) {
    OptimizerConfig c;
    c.lr = lr;
    c.weight_decay = weight_decay;
    return c;
  }
};

/// Per-module optimizer state (Adam moments and step counter).
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  /// Updates mlp in place. `scale` multiplies the effective step; a scale
  /// of exactly 0 is a no-op that also leaves the optimizer state alone.
  void step(MaskedMlp& mlp, const Gradients& grads, double scale = 1.0);

  const OptimizerConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return steps_; }

 private:
  OptimizerConfig config_;
  MlpParams m_;
  MlpParams v_;
  std::uint64_t steps_ = 0;
};

/// N independent masked MLPs; module i models variable i.
class ModelStack {
 public:
  ModelStack() = default;
  /// Zero parameters, all-zero masks.
  ModelStack(std::size_t n, std::size_t k, std::size_t hidden = kModelHidden);

  /// Glorot-initialized stack; module i draws from its own stream derived
  /// from `seed`, so initialization does not depend on module order.
  static ModelStack initialized(std::size_t n, std::size_t k, std::uint64_t seed,
                                std::size_t hidden = kModelHidden);

  std::size_t n() const noexcept { return modules_.size(); }
  std::size_t k() const noexcept { return k_; }
  std::size_t hidden() const noexcept { return hidden_; }

  MaskedMlp& module(std::size_t i) { return modules_.at(i); }
  const MaskedMlp& module(std::size_t i) const { return modules_.at(i); }
  std::span<MaskedMlp> modules() noexcept { return modules_; }
  std::span<const MaskedMlp> modules() const noexcept { return modules_; }

  void set_masks(const BinaryMatrix& masks);
  BinaryMatrix masks() const;

  /// Mean NLL of each module on the data, one entry per variable.
  std::vector<double> per_variable_nll(const SampleMatrix& data) const;

  friend bool operator==(const ModelStack&, const ModelStack&) = default;

 private:
  std::size_t k_ = 0;
  std::size_t hidden_ = 0;
  std::vector<MaskedMlp> modules_;
};

}  // namespace causalshift
