// Acceptance gate. Runs each criterion with pinned tolerances and prints one
// PASS/FAIL line per criterion. `--criterion N` runs a single one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "../unit/support.hpp"
#include "CLI11.hpp"
#include "causalshift/adaptation.hpp"
#include "causalshift/experiment.hpp"
#include "causalshift/scm.hpp"
#include "causalshift/training.hpp"

using namespace causalshift;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Training settings used by every learned-model criterion.
ExperimentConfig desk_config(const std::string& graph, std::size_t n) {
  ExperimentConfig c;
  c.graph = GraphSpec::parse(graph);
  c.n = n;
  c.k = 10;
  c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  c.train.lr = 1e-4;
  c.train.iterations = 2000;
  c.jobs = 1;
  return c;
}

// value lookup in long-format rows
std::map<std::uint64_t, double> per_seed(const std::vector<ResultRow>& rows, const std::string& model, Metric m,
                                         std::size_t step = 0, const std::string& method = "") {
  std::map<std::uint64_t, double> out;
  for (const ResultRow& r : rows)
    if (r.model == model && r.metric == m && r.step == step && (method.empty() || r.adapt_method == method))
      out[r.seed] = r.value;
  return out;
}

bool no_errors(const SweepResult& r, Outcome& o) {
  if (r.errors.empty()) return true;
  o.detail = "sweep cell failed: " + r.errors.front();
  return false;
}

// ----------------------------------------------------------------- 1

Outcome gradient_correctness() {
  oracle::Gen g(0x67726164);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    const std::size_t n = g.size(2, 5), k = g.size(2, 5), hidden = g.size(2, 16), var = g.size(0, n - 1);
    MaskedMlp m(n, k, var, hidden);
    std::vector<std::uint8_t> mask(n, 0);
    for (std::size_t j = 0; j < n; ++j) mask[j] = j != var && g.coin(0.7);
    m.set_mask(mask);
    m.params().for_each_array([&](std::vector<double>& a) {
      for (double& x : a) x = g.real(-1.0, 1.0);
    });
    const SampleMatrix batch = oracle::random_samples(g, c % 10 == 0 ? g.size(257, 400) : g.size(1, 40), n, k);
    const Gradients an = m.backward(batch).grads;
    const auto rows = oracle::rows_of(batch);
    double diff2 = 0.0, an2 = 0.0, fd2 = 0.0;
    for (std::size_t i = 0; i < an.size(); ++i) {
      MlpParams p = m.params();
      const double h = 1e-5, x0 = p.at(i);
      p.at(i) = x0 + h;
      const double up = oracle::mean_nll(p, n, k, hidden, var, rows, mask);
      p.at(i) = x0 - h;
      const double down = oracle::mean_nll(p, n, k, hidden, var, rows, mask);
      const double fd = (up - down) / (2 * h);
      diff2 += (fd - an.at(i)) * (fd - an.at(i));
      an2 += an.at(i) * an.at(i);
      fd2 += fd * fd;
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max({std::sqrt(an2), std::sqrt(fd2), 1e-12}));
  }
  return {worst < 1e-4, fmt("50 cases, max relative error %.3g (< 1e-4)", worst)};
}

// ----------------------------------------------------------------- 2

double tv(const std::map<std::vector<int>, double>& p, const SampleMatrix& s) {
  std::map<std::vector<int>, double> emp;
  for (std::size_t r = 0; r < s.rows(); ++r) emp[std::vector<int>(s.row(r).begin(), s.row(r).end())] += 1.0;
  double d = 0.0;
  for (const auto& [x, q] : p) d += std::abs(q - emp[x] / static_cast<double>(s.rows()));
  for (const auto& [x, c] : emp)
    if (!p.count(x)) d += c / static_cast<double>(s.rows());
  return d / 2;
}

Outcome sampler_correctness() {
  struct Case {
    std::string graph;
    std::size_t n, k;
    int target, value;
  };
  const std::vector<Case> cases{{"er:1", 4, 4, -1, 0}, {"chain", 3, 4, -1, 0}, {"collider", 4, 3, -1, 0},
                                {"full", 4, 4, -1, 0}, {"full", 4, 4, 1, 3},   {"er:1.5", 4, 2, 2, 0}};
  double worst = 0.0;
  std::uint64_t seed = 100;
  for (const Case& c : cases) {
    Rng rng(seed++);
    const Dag dag = GraphSpec::parse(c.graph).generate(c.n, rng);
    const GroundTruthScm scm = init_scm(dag, c.k, rng);
    const auto joint = oracle::exact_joint(scm, c.target, c.value);
    const Dataset d = c.target < 0 ? sample_observational(scm, 200000, rng)
                                   : sample_interventional(scm, Intervention{static_cast<std::size_t>(c.target), c.value},
                                                           200000, rng);
    worst = std::max(worst, tv(joint, d.samples));
  }
  return {worst < 0.01, fmt("%zu SCMs, 200k samples each, max TV %.4f (< 0.01)", cases.size(), worst)};
}

// ----------------------------------------------------------------- 3

Outcome bound_consistency() {
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(s);
    const std::size_t k = 2 + s % 9;
    const GroundTruthScm scm = init_scm(generate_er(8, 1.0 + 0.2 * static_cast<double>(s), rng), k, rng);
    for (bool uniform : {false, true}) {
      for (const Dataset& d : make_test_suite(scm, 8, 100, rng, uniform)) {
        const auto zs = bound_zero_shot(scm, d);
        const auto ad = bound_adaptation(scm, d);
        const std::size_t t = d.intervention->target;
        for (std::size_t i = 0; i < zs.size(); ++i) {
          if (i != t && ad[i] != zs[i]) return {false, fmt("non-target node %zu differs", i)};
        }
        if (!(ad[t] <= zs[t])) return {false, "adaptation bound exceeds zero-shot bound on the target"};
        if (!uniform && ad[t] != 0.0) return {false, fmt("fixed-value target NLL %.17g != 0", ad[t])};
        if (uniform && ad[t] != std::log(static_cast<double>(k))) return {false, "uniform target NLL != ln K"};
        ++checked;
      }
    }
  }
  return {true, fmt("%zu test datasets, all identities exact", checked)};
}

// ----------------------------------------------------------------- 4

Outcome convergence() {
  ExperimentConfig c = desk_config("er:1", 10);
  c.train_sizes = {2000};
  c.models = {ModelKind::exp_causal, ModelKind::bound_zero_shot};
  const SweepResult r = run_generalization_sweep(c);
  Outcome o;
  if (!no_errors(r, o)) return o;
  const auto model = per_seed(r.rows, "exp_causal", Metric::nll_mean);
  const auto bound = per_seed(r.rows, "bound_zero_shot", Metric::nll_mean);
  int ok = 0;
  std::string gaps;
  for (const auto& [seed, v] : model) {
    const double gap = v - bound.at(seed);
    ok += std::abs(gap) <= 0.05;
    gaps += fmt(" %.3f", gap);
  }
  return {ok >= 8, fmt("%d/10 seeds within 0.05 nats of Bound-ZeroShot (need 8); gaps:%s", ok, gaps.c_str())};
}

// ----------------------------------------------------------------- 5

Outcome low_data_ordering() {
  ExperimentConfig c = desk_config("er:1", 20);
  c.train_sizes = {100};
  c.models = {ModelKind::exp_causal, ModelKind::pseudo_ll};
  const SweepResult r = run_generalization_sweep(c);
  Outcome o;
  if (!no_errors(r, o)) return o;
  const auto exp = per_seed(r.rows, "exp_causal", Metric::nll_mean);
  const auto mono = per_seed(r.rows, "pseudo_ll", Metric::nll_mean);
  int ok = 0;
  for (const auto& [seed, v] : exp) ok += v < mono.at(seed);
  return {ok >= 8, fmt("EXP-Causal < Pseudo-LL in %d/10 seeds (need 8); medians %.3f vs %.3f", ok,
                       median([&] { std::vector<double> v; for (auto& [s, x] : exp) v.push_back(x); return v; }()),
                       median([&] { std::vector<double> v; for (auto& [s, x] : mono) v.push_back(x); return v; }()))};
}

// ----------------------------------------------------------------- 6

Outcome dissection() {
  ExperimentConfig c = desk_config("er:1", 20);
  c.train_sizes = {1000};
  c.models = {ModelKind::exp_causal, ModelKind::pseudo_ll, ModelKind::maml, ModelKind::exp_skeleton,
              ModelKind::exp_anticausal};
  const SweepResult r = run_generalization_sweep(c);
  Outcome o;
  if (!no_errors(r, o)) return o;
  auto med = [&](const std::string& m) {
    std::vector<double> v;
    for (const auto& [s, x] : per_seed(r.rows, m, Metric::nll_parents)) v.push_back(x);
    return median(v);
  };
  const double causal = med("exp_causal");
  bool pass = true;
  std::string detail = fmt("median NLL-Parents exp_causal %.4f", causal);
  for (const char* m : {"pseudo_ll", "maml", "exp_skeleton", "exp_anticausal"}) {
    const double v = med(m);
    pass = pass && causal < v;
    detail += fmt(", %s %.4f", m, v);
  }
  return {pass, detail};
}

// ----------------------------------------------------------------- 7

Outcome limit_identities() {
  int checked = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(s);
    const GroundTruthScm scm = init_scm(generate_er(6, 1.0, rng), 5, rng);
    const TrainingData td = make_training_data(scm, 300, 10, rng);
    ModelStack base = ModelStack::initialized(6, 5, s);
    TrainConfig tc;
    tc.lr = 1e-2;
    tc.iterations = 50;
    tc.seed = s;
    train_pseudo_ll(base, td.observational.samples, tc);
    const std::size_t target = s % 6;
    const Dataset d = sample_interventional(scm, Intervention{target, 1}, 30, rng);
    auto run = [&](AdaptMethod m, double t) {
      ModelStack stack = base;
      AdaptConfig ac;
      ac.method = m;
      ac.temperature = t;
      ac.steps = 3;
      adapt(stack, d.samples, ac, target);
      return stack;
    };
    if (!(run(AdaptMethod::regularized, 0.0) == run(AdaptMethod::sparse_predicted, 1.0)))
      return {false, fmt("seed %llu: regularized(t=0) differs from sparse_predicted", (unsigned long long)s)};
    if (!(run(AdaptMethod::regularized, kInfiniteTemperature) == run(AdaptMethod::unconstrained, 1.0)))
      return {false, fmt("seed %llu: regularized(t=inf) differs from unconstrained", (unsigned long long)s)};
    for (AdaptMethod m : {AdaptMethod::sparse_known, AdaptMethod::sparse_predicted}) {
      const ModelStack after = run(m, 1.0);
      const std::size_t chosen = m == AdaptMethod::sparse_known ? target
                                                                : predict_intervention_target(module_scores(base, d.samples));
      for (std::size_t i = 0; i < 6; ++i)
        if (i != chosen && !(after.module(i) == base.module(i)))
          return {false, fmt("sparse adaptation touched module %zu", i)};
      if (after.module(chosen) == base.module(chosen)) return {false, "sparse adaptation did not update its target"};
    }
    checked += 4;
  }
  return {true, fmt("%d identity checks bit-identical", checked)};
}

// ----------------------------------------------------------------- 8

Outcome maml_identity() {
  for (std::uint64_t s = 0; s < 3; ++s) {
    Rng rng(s + 50);
    const GroundTruthScm scm = init_scm(generate_er(5, 1.0, rng), 4, rng);
    const TrainingData td = make_training_data(scm, 10, 400, rng);
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.iterations = 40;
    tc.tasks_per_iteration = 6;
    tc.inner_lr = 0.0;
    tc.inner_steps = 1;
    tc.seed = s;
    ModelStack a = ModelStack::initialized(5, 4, s), b = a;
    const LossTrace ta = train_maml(a, td.interventional, tc);
    const LossTrace tb = train_pseudo_ll_on_tasks(b, td.interventional, tc);
    if (!(a == b) || !(ta == tb)) return {false, fmt("seed %llu: parameters differ", (unsigned long long)s)};
  }
  return {true, "3 seeds, parameters and loss traces bit-identical"};
}

// ----------------------------------------------------------------- 9

Outcome shd_convergence(bool slow) {
  ExperimentConfig c = slow ? desk_config("er:1", 10) : desk_config("chain", 3);
  c.train.lr = 1e-4;
  c.train.iterations = 1000;
  c.train.batch_size = 128;
  c.graph_fit.rounds = 30;
  c.graph_fit.iterations = 100;
  c.graph_fit.graphs_per_update = slow ? 20 : 100;
  c.graph_fit.batch_size = 16;
  std::vector<double> shds;
  for (std::uint64_t seed : c.seeds) {
    const Replicate rep = make_replicate(c, seed);
    const TrainedModel m = train_model(c, rep, ModelKind::l_causal, 2000);
    shds.push_back(static_cast<double>(shd(m.l_causal->graph.dag, rep.scm.dag())));
  }
  const double med = median(shds);
  const double limit = slow ? 3.0 : 1.0;
  std::string list;
  for (double s : shds) list += fmt(" %.0f", s);
  return {med <= limit, fmt("%s: median SHD %.1f (<= %.0f); per seed:%s", slow ? "ER-1 N=10" : "chain N=3", med, limit,
                            list.c_str())};
}

// ----------------------------------------------------------------- 10

Outcome parameter_space() {
  ExperimentConfig c = desk_config("er:1", 10);
  c.train_sizes = {2000};
  c.adapt_sizes = {100};
  c.adapt_steps = {1};
  c.adapt_methods = {AdaptMethod::sparse_known};
  c.models = {ModelKind::exp_causal};
  const SweepResult r = run_adaptation_sweep(c);
  Outcome o;
  if (!no_errors(r, o)) return o;
  const auto inter = per_seed(r.rows, "exp_causal", Metric::grad_norm_intervened);
  const auto others = per_seed(r.rows, "exp_causal", Metric::grad_norm_others);
  int ok = 0;
  double ratio = 0.0;
  for (const auto& [seed, v] : inter) {
    ok += v > others.at(seed);
    ratio += v / others.at(seed) / 10.0;
  }
  return {ok >= 8, fmt("intervened > others in %d/10 seeds (need 8); mean ratio %.2f", ok, ratio)};
}

// ----------------------------------------------------------------- 11

Outcome overfitting() {
  ExperimentConfig c = desk_config("er:1", 10);
  c.train_sizes = {1000};
  c.adapt_sizes = {2};
  c.adapt_steps = {1, 2, 3};
  c.adapt.lr = 0.1;
  c.models = {ModelKind::pseudo_ll};
  c.adapt_methods = {AdaptMethod::unconstrained};
  const SweepResult mono = run_adaptation_sweep(c);
  c.models = {ModelKind::exp_causal};
  c.adapt_methods = {AdaptMethod::sparse_known};
  const SweepResult causal = run_adaptation_sweep(c);
  Outcome o;
  if (!no_errors(mono, o) || !no_errors(causal, o)) return o;
  int overfit = 0, monotone = 0;
  for (std::uint64_t s : c.seeds) {
    const double m1 = per_seed(mono.rows, "pseudo_ll", Metric::nll_mean, 1).at(s);
    const double m3 = per_seed(mono.rows, "pseudo_ll", Metric::nll_mean, 3).at(s);
    overfit += m3 > m1;
    bool non_increasing = true;
    for (std::size_t step = 1; step <= 3; ++step)
      non_increasing = non_increasing && per_seed(causal.rows, "exp_causal", Metric::nll_mean, step).at(s) <=
                                             per_seed(causal.rows, "exp_causal", Metric::nll_mean, step - 1).at(s);
    monotone += non_increasing;
  }
  return {overfit > 5 && monotone > 5,
          fmt("Pseudo-LL step 3 > step 1 in %d/10 seeds; EXP-Causal (sparse) non-increasing in %d/10 (need majority)",
              overfit, monotone)};
}

// ----------------------------------------------------------------- 12

Outcome determinism() {
  ExperimentConfig c;
  c.graph = GraphSpec::parse("er:1");
  c.n = 5;
  c.k = 4;
  c.seeds = {0, 1, 2};
  c.master_seed = 1234;
  c.train_sizes = {60, 200};
  c.adapt_sizes = {5};
  c.adapt_steps = {1, 2};
  c.adapt_methods = {AdaptMethod::unconstrained, AdaptMethod::regularized};
  c.models = {ModelKind::pseudo_ll, ModelKind::maml,           ModelKind::exp_causal,
              ModelKind::l_causal,  ModelKind::bound_zero_shot, ModelKind::bound_adaptation};
  c.train.iterations = 20;
  c.train.lr = 1e-2;
  c.graph_fit.rounds = 2;
  c.graph_fit.iterations = 5;
  c.graph_fit.graphs_per_update = 5;
  c.test.datasets = 4;
  c.test.samples = 50;
  const std::string g1 = rows_to_csv(run_generalization_sweep(c).rows);
  const std::string g2 = rows_to_csv(run_generalization_sweep(c).rows);
  const std::string a1 = rows_to_csv(run_adaptation_sweep(c).rows);
  const std::string a2 = rows_to_csv(run_adaptation_sweep(c).rows);
  const bool pass = g1 == g2 && a1 == a2;
  return {pass, fmt("generalization CSV %zu bytes %s, adaptation CSV %zu bytes %s", g1.size(),
                    g1 == g2 ? "identical" : "DIFFERENT", a1.size(), a1 == a2 ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> selected;
  bool slow = false;
  app.add_option("--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 12));
  app.add_flag("--slow", slow, "criterion 9: run the ER-1 N=10 case instead of the chain");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) {
    selected.resize(12);
    std::iota(selected.begin(), selected.end(), 1);
  }

  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"gradient correctness", gradient_correctness}},
      {2, {"sampler correctness", sampler_correctness}},
      {3, {"bound consistency", bound_consistency}},
      {4, {"convergence to Bound-ZeroShot", convergence}},
      {5, {"low-data ordering", low_data_ordering}},
      {6, {"parent dissection", dissection}},
      {7, {"adaptation limit identities", limit_identities}},
      {8, {"MAML degenerate identity", maml_identity}},
      {9, {"L-Causal SHD convergence", [slow] { return shd_convergence(slow); }}},
      {10, {"localized parameter updates", parameter_space}},
      {11, {"overfitting of monolithic adaptation", overfitting}},
      {12, {"determinism", determinism}},
  };

  int failures = 0;
  for (int id : selected) {
    const auto& [name, fn] = criteria.at(id);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // wall-clock budgets, single core
    const std::map<int, double> budget{{1, 10.0}, {2, 30.0}, {4, 600.0}};
    const double limit = id == 9 && slow ? 1200.0 : (budget.count(id) ? budget.at(id) : 0.0);
    if (limit > 0.0 && secs > limit) {
      o.pass = false;
      o.detail += fmt(" [over the %.0f s budget]", limit);
    }
    std::printf("criterion %2d %-38s %s  (%.1f s) %s\n", id, name, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
