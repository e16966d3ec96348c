#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <tuple>

#include "causalshift/errors.hpp"
#include "causalshift/experiment.hpp"
#include "causalshift/serialization.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace causalshift;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.graph = GraphSpec::parse("chain");
  c.n = 3;
  c.k = 3;
  c.train_sizes = {40};
  c.adapt_sizes = {5};
  c.adapt_steps = {1, 2};
  c.seeds = {0, 1};
  c.models = {ModelKind::exp_causal, ModelKind::pseudo_ll, ModelKind::bound_zero_shot};
  c.test.datasets = 3;
  c.test.samples = 20;
  c.train.iterations = 5;
  c.train.lr = 1e-2;
  return c;
}

bool row_less(const ResultRow& a, const ResultRow& b) {
  return std::tie(a.seed, a.model, a.train_samples, a.adapt_samples, a.adapt_method, a.step, a.metric) <
         std::tie(b.seed, b.model, b.train_samples, b.adapt_samples, b.adapt_method, b.step, b.metric);
}

}  // namespace

TEST_CASE("graph spec parsing") {
  CHECK(GraphSpec::parse("ER-1").name() == "ER-1");
  CHECK(GraphSpec::parse("er:2.5").name() == "ER-2.5");
  CHECK(GraphSpec::parse("Chain").name() == "chain");
  CHECK_THROWS_AS(GraphSpec::parse("er:x"), ParameterError);
  CHECK_THROWS_AS(GraphSpec::parse("er:0"), ParameterError);
}

TEST_CASE("config validation") {
  ExperimentConfig c = tiny();
  CHECK_NOTHROW(validate(c));
  c.seeds.clear();
  CHECK_THROWS_AS(validate(c), ParameterError);
  c = tiny();
  c.models.clear();
  CHECK_THROWS_AS(validate(c), ParameterError);
  c = tiny();
  c.train_sizes = {10, 0};
  CHECK_THROWS_AS(validate(c), ParameterError);
  c = tiny();
  c.adapt_steps = {0};
  CHECK_THROWS_AS(validate(c), ParameterError);
}

TEST_CASE("config JSON round trip") {
  ExperimentConfig c = tiny();
  c.adapt.temperature = kInfiniteTemperature;
  c.graph_fit.lambda_sparse = 0.01;
  c.adapt_methods = {AdaptMethod::regularized, AdaptMethod::sparse_known};
  CHECK(config_from_json(config_to_json(c)) == c);
  ExperimentConfig d;
  CHECK(config_from_json(config_to_json(d)) == d);
  const ExperimentConfig partial = config_from_json(R"({"n": 7, "train": {"lr": 0.5}})");
  CHECK(partial.n == 7);
  CHECK(partial.train.lr == 0.5);
  CHECK(partial.train.iterations == TrainConfig{}.iterations);
  CHECK_THROWS_AS(config_from_json(R"({"nn": 7})"), ParameterError);
  CHECK_THROWS_AS(config_from_json(R"({"train": {"learning_rate": 1}})"), ParameterError);
  CHECK_THROWS_AS(config_from_json(R"({"n": "ten"})"), ParameterError);
  CHECK_THROWS_AS(config_from_json(R"({"models": ["gpt"]})"), ParameterError);
}

TEST_CASE("results CSV") {
  ResultRow r;
  r.graph_type = "ER-1";
  r.n = 10;
  r.k = 10;
  r.seed = 3;
  r.model = "exp_causal";
  r.train_samples = 1000;
  r.metric = Metric::nll_parents;
  r.value = 0.1;
  const std::vector<ResultRow> rows{r};
  const std::string csv = rows_to_csv(rows);
  CHECK(csv == std::string(kResultsHeader) + "\nER-1,10,10,3,exp_causal,1000,0,none,0,nll_parents,0.1\n");
  CHECK(rows_from_csv(csv) == rows);
  CHECK_THROWS_AS(rows_from_csv(std::string(kResultsHeader) + "\nER-1,10,10,3,m,1,0,none,0,nll_best,0.1\n"),
                  ParameterError);
  CHECK_THROWS_AS(rows_from_csv("a,b\n"), ParameterError);
  CHECK_THROWS_AS(parse_metric("accuracy"), ParameterError);
}

TEST_CASE("emit_results writes CSV and manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "causalshift_unit_emit";
  std::filesystem::remove_all(dir);
  ResultRow r;
  r.model = "pseudo_ll";
  const std::vector<ResultRow> rows{r};
  const ExperimentConfig c = tiny();
  emit_results(rows, dir, make_manifest(c, "test", {}));
  const std::string csv = read_text_file(dir / "results.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  CHECK(manifest.at("version") == std::string(version()));
  CHECK(config_from_json(manifest.at("config").dump()) == c);
  CHECK_THROWS_AS(emit_results(std::vector<ResultRow>{}, dir, "{}"), ParameterError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("replicate seeds are distinct per stream") {
  const ReplicateSeeds a = replicate_seeds(0, 0), b = replicate_seeds(0, 1), c = replicate_seeds(1, 0);
  CHECK(a.base != b.base);
  CHECK(a.base != c.base);
  CHECK(a.scm != a.test);
  CHECK(a.train(10, ModelKind::maml) != a.train(10, ModelKind::pseudo_ll));
  CHECK(a.data(10) != a.data(20));
}

TEST_CASE("test suite is shared across train sizes and models") {
  const ExperimentConfig c = tiny();
  const Replicate r1 = make_replicate(c, 0);
  const Replicate r2 = make_replicate(c, 0);
  CHECK(r1.tests == r2.tests);
  CHECK(r1.scm == r2.scm);
}

TEST_CASE("generalization sweep: rows, determinism and parallel multiset") {
  ExperimentConfig c = tiny();
  c.models.push_back(ModelKind::l_causal);
  c.graph_fit.rounds = 1;
  c.graph_fit.iterations = 2;
  c.graph_fit.graphs_per_update = 2;
  const SweepResult a = run_generalization_sweep(c);
  CHECK(a.errors.empty());
  const SweepResult b = run_generalization_sweep(c);
  CHECK(rows_to_csv(a.rows) == rows_to_csv(b.rows));
  auto has = [&](const std::string& model, Metric m) {
    return std::any_of(a.rows.begin(), a.rows.end(), [&](const ResultRow& r) { return r.model == model && r.metric == m; });
  };
  CHECK(has("exp_causal", Metric::nll_mean));
  CHECK(has("bound_zero_shot", Metric::nll_mean));
  CHECK(has("l_causal", Metric::shd));
  CHECK_FALSE(has("exp_causal", Metric::shd));
  c.jobs = 3;
  SweepResult p = run_generalization_sweep(c);
  auto sa = a.rows, sp = p.rows;
  std::sort(sa.begin(), sa.end(), row_less);
  std::sort(sp.begin(), sp.end(), row_less);
  CHECK(sa == sp);
}

TEST_CASE("a failing cell yields an error row and the sweep continues") {
  ExperimentConfig c = tiny();
  c.seeds = {0};
  c.models = {ModelKind::l_causal, ModelKind::exp_causal};
  c.graph_fit.graphs_per_update = 0;
  const SweepResult r = run_generalization_sweep(c);
  REQUIRE(r.errors.size() == 1);
  const auto err = std::find_if(r.rows.begin(), r.rows.end(), [](const ResultRow& x) { return x.metric == Metric::error; });
  REQUIRE(err != r.rows.end());
  CHECK(err->model == "l_causal");
  CHECK(std::isnan(err->value));
  CHECK(std::any_of(r.rows.begin(), r.rows.end(),
                    [](const ResultRow& x) { return x.model == "exp_causal" && x.metric == Metric::nll_mean; }));
}

TEST_CASE("adaptation sweep reports steps 0..max and the probe") {
  ExperimentConfig c = tiny();
  c.seeds = {0};
  c.adapt_methods = {AdaptMethod::sparse_known, AdaptMethod::unconstrained};
  const SweepResult r = run_adaptation_sweep(c);
  CHECK(r.errors.empty());
  std::set<std::size_t> steps;
  for (const auto& row : r.rows) {
    CHECK(row.adapt_samples == 5);
    steps.insert(row.step);
    if (row.metric == Metric::grad_norm_intervened) CHECK(row.step == 0);
  }
  CHECK(steps == std::set<std::size_t>{0, 1, 2});
  // step 0 is the zero-shot state, identical for both methods
  auto value = [&](const std::string& model, const std::string& method, std::size_t step) {
    for (const auto& row : r.rows)
      if (row.model == model && row.adapt_method == method && row.step == step && row.metric == Metric::nll_mean)
        return row.value;
    return std::nan("");
  };
  CHECK(value("exp_causal", "sparse_known", 0) == value("exp_causal", "unconstrained", 0));
  CHECK(value("exp_causal", "sparse_known", 2) != value("exp_causal", "sparse_known", 0));
  CHECK(value("bound_zero_shot", "sparse_known", 2) == value("bound_zero_shot", "sparse_known", 0));
}

TEST_CASE("grid reports one best entry per trained model") {
  ExperimentConfig c = tiny();
  c.seeds = {0};
  c.models = {ModelKind::pseudo_ll, ModelKind::bound_zero_shot};
  c.grid.lr = {1e-2, 1e-3};
  c.grid.weight_decay = {0.0};
  c.grid.iterations = {3};
  const GridResult g = run_grid(c);
  CHECK(g.entries.size() == 2);
  REQUIRE(g.best.size() == 1);
  CHECK(g.best[0].mean_nll == std::min(g.entries[0].mean_nll, g.entries[1].mean_nll));
  const std::string csv = grid_to_csv(g);
  CHECK(csv.rfind("model,lr,weight_decay,iterations,mean_nll,best\n", 0) == 0);
}
