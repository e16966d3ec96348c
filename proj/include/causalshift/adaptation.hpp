#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "causalshift/data.hpp"
#include "causalshift/metrics.hpp"
#include "causalshift/nn.hpp"

namespace causalshift {

enum class AdaptMethod { unconstrained, sparse_known, sparse_predicted, regularized };

AdaptMethod parse_adapt_method(std::string_view name);
std::string_view to_string(AdaptMethod method) noexcept;

inline constexpr double kInfiniteTemperature = std::numeric_limits<double>::infinity();

struct AdaptConfig {
  AdaptMethod method = AdaptMethod::unconstrained;
  std::size_t steps = 1;
  double lr = 0.1;           ///< plain SGD
  double temperature = 1.0;  ///< regularized only; may be kInfiniteTemperature

  friend bool operator==(const AdaptConfig&, const AdaptConfig&) = default;
};

void validate(const AdaptConfig& cfg);

/// Per-module mean NLL on the adaptation data.
using ScoreVector = std::vector<double>;

ScoreVector module_scores(const ModelStack& stack, const SampleMatrix& d_adapt);

/// Argmax of the scores, lowest index on ties.
std::size_t predict_intervention_target(std::span<const double> scores);

/// softmax(s / t). t = 0 gives the one-hot argmax vector, t = infinity the
/// uniform vector.
std::vector<double> adaptation_weights(std::span<const double> scores, double temperature);

/// Per-module multiplier of the SGD step for one adaptation run.
///
/// unconstrained: all 1. sparse: 1 on the known or predicted target, 0
/// elsewhere. regularized: w_i / max_j w_j, so t = infinity reproduces
/// unconstrained and t = 0 reproduces sparse_predicted exactly.
std::vector<double> adaptation_scales(const AdaptConfig& cfg, std::span<const double> scores,
                                      std::optional<std::size_t> known_target);

struct AdaptStep {
  std::size_t step = 0;
  std::vector<double> grad_norm;  ///< norm of the applied update direction, scale * |g|
  std::vector<double> nll_adapt;  ///< per-module NLL on d_adapt after this step
  std::optional<EvalRecord> eval;
};

struct AdaptResult {
  ScoreVector scores;
  std::vector<double> scales;
  std::vector<AdaptStep> trace;  ///< step 0 is the zero-shot state
};

/// Called after every step (including step 0) to evaluate the current stack.
using StepEvaluator = std::function<EvalRecord(const ModelStack&, std::size_t step)>;

/// Fine-tunes the stack in place on d_adapt with cfg.steps full-batch SGD
/// steps. Scores are computed once, before the first step. Modules with
/// scale 0 are left bit-identical.
AdaptResult adapt(ModelStack& stack, const SampleMatrix& d_adapt, const AdaptConfig& cfg,
                  std::optional<std::size_t> known_target = std::nullopt,
                  const StepEvaluator& evaluator = {});

/// CSV with header `step,module,grad_norm,nll_adapt,nll_test_mean`; the
/// last column is empty when no evaluator was supplied.
std::string adapt_trace_to_csv(const AdaptResult& result);

struct ProbeResult {
  double grad_norm_intervened = 0.0;
  double grad_norm_others_mean = 0.0;
  std::vector<double> per_module;
};

/// Gradient norm of every module on d_adapt, without changing parameters.
ProbeResult parameter_space_probe(const ModelStack& stack, const SampleMatrix& d_adapt,
                                  std::size_t intervention_target);

}  // namespace causalshift
