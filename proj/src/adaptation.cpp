#include "causalshift/adaptation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "causalshift/errors.hpp"

namespace causalshift {

AdaptMethod parse_adapt_method(std::string_view name) {
  if (name == "unconstrained") return AdaptMethod::unconstrained;
  if (name == "sparse_known") return AdaptMethod::sparse_known;
  if (name == "sparse_predicted") return AdaptMethod::sparse_predicted;
  if (name == "regularized") return AdaptMethod::regularized;
  throw ParameterError("unknown adaptation method '" + std::string(name) + "'");
}

std::string_view to_string(AdaptMethod method) noexcept {
  switch (method) {
    case AdaptMethod::unconstrained: return "unconstrained";
    case AdaptMethod::sparse_known: return "sparse_known";
    case AdaptMethod::sparse_predicted: return "sparse_predicted";
    case AdaptMethod::regularized: return "regularized";
  }
  return "unknown";
}

void validate(const AdaptConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ParameterError("adaptation lr must be positive");
  if (cfg.steps == 0) throw ParameterError("adaptation needs at least one step");
  if (!(cfg.temperature >= 0.0)) throw ParameterError("temperature must be nonnegative");
}

ScoreVector module_scores(const ModelStack& stack, const SampleMatrix& d_adapt) {
  if (d_adapt.empty()) throw ParameterError("adaptation set is empty");
  return stack.per_variable_nll(d_adapt);
}

std::size_t predict_intervention_target(std::span<const double> scores) {
  if (scores.empty()) throw ParameterError("empty score vector");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

std::vector<double> adaptation_weights(std::span<const double> scores, double temperature) {
  if (scores.empty()) throw ParameterError("empty score vector");
  if (!(temperature >= 0.0)) throw ParameterError("temperature must be nonnegative");
  const std::size_t n = scores.size();
  std::vector<double> w(n, 0.0);
  if (temperature == 0.0) {
    w[predict_intervention_target(scores)] = 1.0;
    return w;
  }
  if (std::isinf(temperature)) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
    return w;
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp((scores[i] - top) / temperature);
    z += w[i];
  }
  for (double& x : w) x /= z;
  return w;
}

std::vector<double> adaptation_scales(const AdaptConfig& cfg, std::span<const double> scores,
                                      std::optional<std::size_t> known_target) {
  const std::size_t n = scores.size();
  std::vector<double> scales(n, 0.0);
  switch (cfg.method) {
    case AdaptMethod::unconstrained:
      std::fill(scales.begin(), scales.end(), 1.0);
      break;
    case AdaptMethod::sparse_known:
      if (!known_target) throw ParameterError("sparse_known adaptation requires the intervention target");
      if (*known_target >= n) throw ParameterError("known target out of range");
      scales[*known_target] = 1.0;
      break;
    case AdaptMethod::sparse_predicted:
      scales[predict_intervention_target(scores)] = 1.0;
      break;
    case AdaptMethod::regularized: {
      const auto w = adaptation_weights(scores, cfg.temperature);
      const double top = *std::max_element(w.begin(), w.end());
      for (std::size_t i = 0; i < n; ++i) scales[i] = w[i] / top;
      break;
    }
  }
  return scales;
}

AdaptResult adapt(ModelStack& stack, const SampleMatrix& d_adapt, const AdaptConfig& cfg,
                  std::optional<std::size_t> known_target, const StepEvaluator& evaluator) {
  validate(cfg);
  if (d_adapt.width() != stack.n()) throw ParameterError("adaptation data width does not match the stack");
  const std::size_t n = stack.n();

  AdaptResult result;
  result.scores = module_scores(stack, d_adapt);
  result.scales = adaptation_scales(cfg, result.scores, known_target);

  auto record = [&](std::size_t step, std::vector<double> norms, std::vector<double> nll) {
    AdaptStep s{step, std::move(norms), std::move(nll), std::nullopt};
    if (evaluator) s.eval = evaluator(stack, step);
    result.trace.push_back(std::move(s));
  };
  record(0, std::vector<double>(n, 0.0), result.scores);

  std::vector<Optimizer> opts(n, Optimizer(OptimizerConfig::sgd(cfg.lr)));
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<double> norms(n, 0.0);
    std::vector<double> nll = result.trace.back().nll_adapt;
    for (std::size_t i = 0; i < n; ++i) {
      const double scale = result.scales[i];
      if (scale == 0.0) continue;
      MaskedMlp& mlp = stack.module(i);
      const BackwardResult r = mlp.backward(d_adapt);
      norms[i] = scale * grad_norm(r.grads);
      opts[i].step(mlp, r.grads, scale);
      nll[i] = mlp.mean_nll(d_adapt);
    }
    record(step, std::move(norms), std::move(nll));
  }
  return result;
}

std::string adapt_trace_to_csv(const AdaptResult& result) {
  std::string out = "step,module,grad_norm,nll_adapt,nll_test_mean\n";
  char buf[64];
  auto number = [&](double v) {
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
  };
  for (const AdaptStep& s : result.trace) {
    for (std::size_t i = 0; i < s.grad_norm.size(); ++i) {
      out += std::to_string(s.step);
      out += ',';
      out += std::to_string(i);
      out += ',';
      number(s.grad_norm[i]);
      out += ',';
      number(s.nll_adapt[i]);
      out += ',';
      if (s.eval) number(s.eval->nll_mean);
      out += '\n';
    }
  }
  return out;
}

ProbeResult parameter_space_probe(const ModelStack& stack, const SampleMatrix& d_adapt,
                                  std::size_t intervention_target) {
  const std::size_t n = stack.n();
  if (intervention_target >= n) throw ParameterError("probe target out of range");
  if (n < 2) throw ParameterError("probe needs at least two modules");
  if (d_adapt.empty()) throw ParameterError("adaptation set is empty");
  ProbeResult p;
  p.per_module.resize(n);
  double others = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p.per_module[i] = grad_norm(stack.module(i).backward(d_adapt).grads);
    if (i != intervention_target) others += p.per_module[i];
  }
  p.grad_norm_intervened = p.per_module[intervention_target];
  p.grad_norm_others_mean = others / static_cast<double>(n - 1);
  return p;
}

}  // namespace causalshift
