#include "causalshift/metrics.hpp"

#include "causalshift/errors.hpp"

namespace causalshift {

NodeCategory categorize(const Dag& dag, std::size_t target) {
  const std::size_t n = dag.size();
  if (target >= n) throw ParameterError("categorize: target out of range");
  NodeCategory c{target, std::vector<std::uint8_t>(n, 0), std::vector<std::uint8_t>(n, 0),
                 std::vector<std::uint8_t>(n, 0)};
  std::vector<std::uint8_t> is_root(n, 0);
  for (std::size_t r : roots(dag)) is_root[r] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == target) continue;
    c.root[i] = is_root[i];
    c.remainder[i] = is_root[i] ? 0 : 1;
  }
  for (std::size_t p : parents(dag, target))
    if (!is_root[p]) c.parent[p] = 1;
  return c;
}

namespace {

struct Accumulator {
  double sum = 0.0;
  std::size_t count = 0;

  void add(double v) {
    sum += v;
    ++count;
  }
  std::optional<double> mean() const {
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
  }
};

std::optional<double> category_mean(std::span<const double> values, std::span<const std::uint8_t> members) {
  Accumulator a;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (members[i]) a.add(values[i]);
  return a.mean();
}

}  // namespace

EvalRecord aggregate(const Dag& dag_true, std::span<const DatasetNll> results) {
  if (results.empty()) throw ParameterError("aggregate: no datasets");
  Accumulator mean, intervention, root, parent, remainder;
  for (const DatasetNll& d : results) {
    if (d.per_variable.size() != dag_true.size()) throw ParameterError("aggregate: width mismatch");
    const NodeCategory cat = categorize(dag_true, d.target);
    Accumulator all;
    for (double v : d.per_variable) all.add(v);
    mean.add(*all.mean());
    intervention.add(d.per_variable[d.target]);
    if (auto m = category_mean(d.per_variable, cat.root)) root.add(*m);
    if (auto m = category_mean(d.per_variable, cat.parent)) parent.add(*m);
    if (auto m = category_mean(d.per_variable, cat.remainder)) remainder.add(*m);
  }
  EvalRecord rec;
  rec.nll_mean = *mean.mean();
  rec.nll_intervention = *intervention.mean();
  rec.nll_root = root.mean();
  rec.nll_parents = parent.mean();
  rec.nll_remainder = remainder.mean();
  return rec;
}

EvalRecord evaluate(const ModelStack& stack, const Dag& dag_true, std::span<const Dataset> tests) {
  if (tests.empty()) throw ParameterError("evaluate: no test datasets");
  if (stack.n() != dag_true.size()) throw ParameterError("evaluate: stack and graph sizes differ");
  std::vector<DatasetNll> results;
  results.reserve(tests.size());
  for (const Dataset& d : tests) {
    if (!d.intervention) throw ParameterError("evaluate: test datasets must carry an intervention");
    results.push_back({d.intervention->target, stack.per_variable_nll(d.samples)});
  }
  return aggregate(dag_true, results);
}

std::pair<EvalRecord, EvalRecord> evaluate_bounds(const GroundTruthScm& scm, std::span<const Dataset> tests) {
  if (tests.empty()) throw ParameterError("evaluate_bounds: no test datasets");
  std::vector<DatasetNll> zero_shot;
  std::vector<DatasetNll> adapted;
  for (const Dataset& d : tests) {
    if (!d.intervention) throw ParameterError("evaluate_bounds: test datasets must carry an intervention");
    auto zs = bound_zero_shot(scm, d);
    auto ad = zs;
    ad[d.intervention->target] = bound_adaptation(scm, d)[d.intervention->target];
    zero_shot.push_back({d.intervention->target, std::move(zs)});
    adapted.push_back({d.intervention->target, std::move(ad)});
  }
  return {aggregate(scm.dag(), zero_shot), aggregate(scm.dag(), adapted)};
}

}  // namespace causalshift
