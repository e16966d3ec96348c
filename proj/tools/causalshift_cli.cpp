// Command line front end: single-step tools (gen-graph, gen-data, train,
// eval, adapt) and the seeded sweeps.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "causalshift/adaptation.hpp"
#include "causalshift/errors.hpp"
#include "causalshift/experiment.hpp"
#include "causalshift/serialization.hpp"

namespace fs = std::filesystem;
using namespace causalshift;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> jobs;
};

// Flags that mirror ExperimentConfig fields. Unset flags keep the value from
// the config file (or the built-in default).
struct Overrides {
  std::optional<std::string> graph;
  std::optional<std::size_t> n, k;
  std::vector<std::size_t> train_sizes, adapt_sizes, adapt_steps;
  std::vector<std::string> methods, models;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> num_seeds;
  std::optional<double> lr, weight_decay, adapt_lr, temperature;
  std::optional<std::size_t> iterations, batch_size, rounds, test_datasets, test_samples;
  bool uniform = false;
  bool save_traces = false;
};

void add_common(CLI::App* app, Common& c, bool with_jobs) {
  app->add_option("--config", c.config_path, "JSON config file overriding defaults")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--out", c.out, "output directory");
  if (with_jobs) app->add_option("--jobs", c.jobs, "worker threads");
}

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--graph", o.graph, "er:<density>, ER-<density> or a preset name");
  app->add_option("--n", o.n, "number of variables");
  app->add_option("--k", o.k, "categories per variable");
  app->add_option("--train-sizes", o.train_sizes, "training set sizes");
  app->add_option("--adapt-sizes", o.adapt_sizes, "adaptation set sizes");
  app->add_option("--adapt-steps", o.adapt_steps, "reported adaptation steps");
  app->add_option("--methods", o.methods, "adaptation methods");
  app->add_option("--models", o.models, "models to run");
  app->add_option("--seeds", o.seeds, "replicate seeds");
  app->add_option("--num-seeds", o.num_seeds, "use seeds 0..N-1");
  app->add_option("--lr", o.lr, "training learning rate");
  app->add_option("--weight-decay", o.weight_decay, "training weight decay");
  app->add_option("--iterations", o.iterations, "training iterations");
  app->add_option("--batch-size", o.batch_size, "training batch size (0: automatic)");
  app->add_option("--rounds", o.rounds, "L-Causal rounds");
  app->add_option("--adapt-lr", o.adapt_lr, "adaptation SGD learning rate");
  app->add_option("--temperature", o.temperature, "regularized adaptation temperature");
  app->add_option("--test-datasets", o.test_datasets, "test interventions per replicate");
  app->add_option("--test-samples", o.test_samples, "samples per test intervention");
  app->add_flag("--uniform", o.uniform, "redraw the intervened value per test sample");
  app->add_flag("--save-traces", o.save_traces, "write training traces next to the results");
}

ExperimentConfig resolve_config(const Common& c, const Overrides& o) {
  ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg = config_from_json(read_text_file(c.config_path));
  if (c.seed) cfg.master_seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.jobs) cfg.jobs = *c.jobs;
  if (o.graph) cfg.graph = GraphSpec::parse(*o.graph);
  if (o.n) cfg.n = *o.n;
  if (o.k) cfg.k = *o.k;
  if (!o.train_sizes.empty()) cfg.train_sizes = o.train_sizes;
  if (!o.adapt_sizes.empty()) cfg.adapt_sizes = o.adapt_sizes;
  if (!o.adapt_steps.empty()) cfg.adapt_steps = o.adapt_steps;
  if (!o.methods.empty()) {
    cfg.adapt_methods.clear();
    for (const auto& m : o.methods) cfg.adapt_methods.push_back(parse_adapt_method(m));
  }
  if (!o.models.empty()) {
    cfg.models.clear();
    for (const auto& m : o.models) cfg.models.push_back(parse_model_kind(m));
  }
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.num_seeds) {
    cfg.seeds.clear();
    for (std::uint64_t s = 0; s < *o.num_seeds; ++s) cfg.seeds.push_back(s);
  }
  if (o.lr) cfg.train.lr = *o.lr;
  if (o.weight_decay) cfg.train.weight_decay = *o.weight_decay;
  if (o.iterations) cfg.train.iterations = *o.iterations;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.rounds) cfg.graph_fit.rounds = *o.rounds;
  if (o.adapt_lr) cfg.adapt.lr = *o.adapt_lr;
  if (o.temperature) cfg.adapt.temperature = *o.temperature;
  if (o.test_datasets) cfg.test.datasets = *o.test_datasets;
  if (o.test_samples) cfg.test.samples = *o.test_samples;
  if (o.uniform) cfg.test.uniform = true;
  if (o.save_traces) cfg.save_traces = true;
  validate(cfg);
  return cfg;
}

fs::path out_dir(const Common& c) { return c.out.empty() ? fs::path(".") : fs::path(c.out); }

std::string record_csv(const EvalRecord& r) {
  std::vector<ResultRow> rows;
  append_record_rows(rows, ResultRow{}, r);
  std::string out = "metric,value\n";
  for (const ResultRow& row : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", row.value);
    out += std::string(to_string(row.metric)) + ',' + buf + '\n';
  }
  return out;
}

void split_training(const std::vector<Dataset>& all, SampleMatrix& obs, std::vector<Dataset>& ints) {
  for (const Dataset& d : all) {
    if (d.intervention) {
      ints.push_back(d);
    } else {
      if (obs.width() == 0) obs = SampleMatrix(d.samples.width());
      for (std::size_t r = 0; r < d.samples.rows(); ++r) obs.push_back(d.samples.row(r));
    }
  }
}

void report_errors(const std::vector<std::string>& errors) {
  for (const auto& e : errors) std::cerr << "cell failed: " << e << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured vs monolithic models under interventional shift"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));

  // gen-graph
  Common gg_c;
  std::string gg_graph = "er:1";
  std::size_t gg_n = 10, gg_k = kDefaultCategories;
  auto* gen_graph = app.add_subcommand("gen-graph", "sample a DAG and its ground-truth SCM");
  add_common(gen_graph, gg_c, false);
  gen_graph->add_option("--graph", gg_graph, "er:<density> or a preset name");
  gen_graph->add_option("--n", gg_n, "number of variables");
  gen_graph->add_option("--k", gg_k, "categories per variable");

  // gen-data
  Common gd_c;
  std::string gd_scm;
  std::size_t gd_train = 1000, gd_test_datasets = 20, gd_test_samples = 500;
  bool gd_uniform = false;
  auto* gen_data = app.add_subcommand("gen-data", "draw training data and a held-out test suite");
  add_common(gen_data, gd_c, false);
  gen_data->add_option("--scm", gd_scm, "SCM file from gen-graph")->required()->check(CLI::ExistingFile);
  gen_data->add_option("--train-samples", gd_train, "observational and interventional samples each");
  gen_data->add_option("--test-datasets", gd_test_datasets, "test interventions");
  gen_data->add_option("--test-samples", gd_test_samples, "samples per test intervention");
  gen_data->add_flag("--uniform", gd_uniform, "redraw the intervened value per test sample");

  // train
  Common tr_c;
  Overrides tr_o;
  std::string tr_data, tr_scm, tr_model = "exp_causal";
  auto* train = app.add_subcommand("train", "train one model on a training CSV");
  add_common(train, tr_c, false);
  train->add_option("--data", tr_data, "training CSV from gen-data")->required()->check(CLI::ExistingFile);
  train->add_option("--scm", tr_scm, "SCM file; its graph defines the expert masks")->check(CLI::ExistingFile);
  train->add_option("--model", tr_model, "model kind");
  train->add_option("--lr", tr_o.lr, "learning rate");
  train->add_option("--weight-decay", tr_o.weight_decay, "weight decay");
  train->add_option("--iterations", tr_o.iterations, "iterations");
  train->add_option("--batch-size", tr_o.batch_size, "batch size (0: automatic)");
  train->add_option("--rounds", tr_o.rounds, "L-Causal rounds");

  // eval
  Common ev_c;
  std::string ev_model, ev_scm, ev_data;
  auto* eval = app.add_subcommand("eval", "zero-shot evaluation on a test CSV");
  add_common(eval, ev_c, false);
  eval->add_option("--model-file", ev_model, "checkpoint from train (omit with --bound)")->check(CLI::ExistingFile);
  eval->add_option("--scm", ev_scm, "SCM file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", ev_data, "test CSV")->required()->check(CLI::ExistingFile);
  std::string ev_bound;
  eval->add_option("--bound", ev_bound, "evaluate bound_zero_shot or bound_adaptation instead of a model");

  // adapt
  Common ad_c;
  std::string ad_model, ad_data, ad_scm, ad_eval, ad_method = "unconstrained";
  std::size_t ad_steps = 1;
  double ad_lr = 0.1, ad_temperature = 1.0;
  std::optional<std::size_t> ad_target;
  auto* adapt_cmd = app.add_subcommand("adapt", "fine-tune a checkpoint on one intervention dataset");
  add_common(adapt_cmd, ad_c, false);
  adapt_cmd->add_option("--model-file", ad_model, "checkpoint from train")->required()->check(CLI::ExistingFile);
  adapt_cmd->add_option("--data", ad_data, "adaptation CSV (first dataset is used)")->required()->check(CLI::ExistingFile);
  adapt_cmd->add_option("--method", ad_method, "unconstrained, sparse_known, sparse_predicted or regularized");
  adapt_cmd->add_option("--steps", ad_steps, "SGD steps");
  adapt_cmd->add_option("--lr", ad_lr, "SGD learning rate");
  adapt_cmd->add_option("--temperature", ad_temperature, "regularized temperature");
  adapt_cmd->add_option("--target", ad_target, "known target (defaults to the CSV's target)");
  adapt_cmd->add_option("--eval-data", ad_eval, "test CSV evaluated after every step")->check(CLI::ExistingFile);
  adapt_cmd->add_option("--scm", ad_scm, "SCM file, required with --eval-data")->check(CLI::ExistingFile);

  // sweeps
  Common sg_c, sa_c, gr_c;
  Overrides sg_o, sa_o, gr_o;
  auto* sweep_gen = app.add_subcommand("sweep-generalization", "zero-shot sweep over seeds, sizes and models");
  add_common(sweep_gen, sg_c, true);
  add_overrides(sweep_gen, sg_o);
  auto* sweep_adapt = app.add_subcommand("sweep-adaptation", "adaptation sweep over seeds, sizes, methods and steps");
  add_common(sweep_adapt, sa_c, true);
  add_overrides(sweep_adapt, sa_o);
  auto* grid = app.add_subcommand("grid", "hyperparameter grid with per-model best");
  add_common(grid, gr_c, true);
  add_overrides(grid, gr_o);

  std::string command;
  for (int i = 0; i < argc; ++i) command += (i ? " " : "") + std::string(argv[i]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen_graph) {
      const GraphSpec spec = GraphSpec::parse(gg_graph);
      Rng rng(gg_c.seed.value_or(0));
      const Dag dag = spec.generate(gg_n, rng);
      const GroundTruthScm scm = init_scm(dag, gg_k, rng);
      const fs::path dir = out_dir(gg_c);
      write_text_file(dir / "graph.txt", to_edge_list(dag));
      write_text_file(dir / "scm.json", scm_to_json(scm));
      std::cout << "wrote " << (dir / "graph.txt").string() << " and " << (dir / "scm.json").string() << '\n';
    } else if (*gen_data) {
      const GroundTruthScm scm = scm_from_json(read_text_file(gd_scm));
      const std::uint64_t seed = gd_c.seed.value_or(0);
      Rng train_rng(derive_seed(seed, "train"));
      TrainingData data = make_training_data(scm, gd_train, gd_train, train_rng);
      std::vector<Dataset> train_sets{data.observational};
      train_sets.insert(train_sets.end(), data.interventional.begin(), data.interventional.end());
      Rng test_rng(derive_seed(seed, "test"));
      const auto tests = make_test_suite(scm, gd_test_datasets, gd_test_samples, test_rng, gd_uniform);
      const fs::path dir = out_dir(gd_c);
      write_text_file(dir / "train.csv", to_csv(train_sets));
      write_text_file(dir / "test.csv", to_csv(tests));
      std::cout << "wrote " << (dir / "train.csv").string() << " and " << (dir / "test.csv").string() << '\n';
    } else if (*train) {
      ExperimentConfig cfg = resolve_config(tr_c, tr_o);
      const ModelKind kind = parse_model_kind(tr_model);
      if (is_bound(kind)) throw ParameterError("bound models are not trainable");
      SampleMatrix obs;
      std::vector<Dataset> ints;
      split_training(parse_csv(read_text_file(tr_data)), obs, ints);
      const std::size_t n = obs.width() ? obs.width() : (ints.empty() ? 0 : ints.front().samples.width());
      if (n == 0) throw ParameterError("training CSV has no samples");
      std::optional<GroundTruthScm> scm;
      if (!tr_scm.empty()) scm = scm_from_json(read_text_file(tr_scm));
      const bool expert = kind == ModelKind::exp_causal || kind == ModelKind::exp_anticausal ||
                          kind == ModelKind::exp_skeleton;
      if (expert && !scm) throw ParameterError("expert models need --scm for the true graph");
      const std::size_t k = scm ? scm->k() : cfg.k;
      const std::uint64_t seed = cfg.master_seed;
      ModelStack stack = ModelStack::initialized(n, k, derive_seed(seed, "init"));
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(seed, "train");
      LossTrace trace;
      std::optional<LCausalResult> lc;
      switch (kind) {
        case ModelKind::pseudo_ll: trace = train_pseudo_ll(stack, obs, tc); break;
        case ModelKind::maml: trace = train_maml(stack, ints, tc); break;
        case ModelKind::exp_causal: trace = train_expert(stack, scm->dag(), ExpertMode::causal, obs, tc); break;
        case ModelKind::exp_anticausal: trace = train_expert(stack, scm->dag(), ExpertMode::anticausal, obs, tc); break;
        case ModelKind::exp_skeleton: trace = train_expert(stack, scm->dag(), ExpertMode::skeleton, obs, tc); break;
        case ModelKind::l_causal: {
          GraphFitConfig gf = cfg.graph_fit;
          gf.seed = tc.seed;
          lc = train_l_causal(stack, obs, ints, tc, gf);
          trace = lc->trace;
          break;
        }
        default: break;
      }
      const fs::path dir = out_dir(tr_c);
      write_text_file(dir / "model.json", checkpoint_to_json(ModelCheckpoint{stack}));
      write_text_file(dir / "trace.csv", trace_to_csv(trace));
      if (lc) {
        write_text_file(dir / "gamma.json", gamma_to_json(lc->gamma));
        write_text_file(dir / "graph.txt", to_edge_list(lc->graph.dag));
        if (scm) std::cout << "shd " << shd(lc->graph.dag, scm->dag()) << '\n';
      }
      std::cout << "wrote " << (dir / "model.json").string() << '\n';
    } else if (*eval) {
      const GroundTruthScm scm = scm_from_json(read_text_file(ev_scm));
      const auto tests = parse_csv(read_text_file(ev_data));
      EvalRecord rec;
      if (!ev_bound.empty()) {
        const ModelKind b = parse_model_kind(ev_bound);
        if (!is_bound(b)) throw ParameterError("--bound expects bound_zero_shot or bound_adaptation");
        const auto [zs, ad] = evaluate_bounds(scm, tests);
        rec = b == ModelKind::bound_zero_shot ? zs : ad;
      } else {
        if (ev_model.empty()) throw ParameterError("eval needs --model-file or --bound");
        rec = evaluate(checkpoint_from_json(read_text_file(ev_model)).stack, scm.dag(), tests);
      }
      const std::string csv = record_csv(rec);
      if (!ev_c.out.empty()) write_text_file(fs::path(ev_c.out) / "eval.csv", csv);
      std::cout << csv;
    } else if (*adapt_cmd) {
      ModelCheckpoint ck = checkpoint_from_json(read_text_file(ad_model));
      const auto sets = parse_csv(read_text_file(ad_data));
      if (sets.empty()) throw ParameterError("adaptation CSV has no datasets");
      AdaptConfig ac;
      ac.method = parse_adapt_method(ad_method);
      ac.steps = ad_steps;
      ac.lr = ad_lr;
      ac.temperature = ad_temperature;
      std::optional<std::size_t> target = ad_target;
      if (!target && sets.front().intervention) target = sets.front().intervention->target;
      StepEvaluator evaluator;
      std::optional<GroundTruthScm> scm;
      std::vector<Dataset> tests;
      if (!ad_eval.empty()) {
        if (ad_scm.empty()) throw ParameterError("--eval-data needs --scm");
        scm = scm_from_json(read_text_file(ad_scm));
        tests = parse_csv(read_text_file(ad_eval));
        evaluator = [&](const ModelStack& s, std::size_t) { return evaluate(s, scm->dag(), tests); };
      }
      const AdaptResult result = adapt(ck.stack, sets.front().samples, ac, target, evaluator);
      const fs::path dir = out_dir(ad_c);
      write_text_file(dir / "adapted_model.json", checkpoint_to_json(ck));
      write_text_file(dir / "adapt_trace.csv", adapt_trace_to_csv(result));
      std::cout << "wrote " << (dir / "adapted_model.json").string() << '\n';
    } else if (*sweep_gen || *sweep_adapt) {
      const bool gen = sweep_gen->parsed();
      const ExperimentConfig cfg = gen ? resolve_config(sg_c, sg_o) : resolve_config(sa_c, sa_o);
      const SweepResult res = gen ? run_generalization_sweep(cfg) : run_adaptation_sweep(cfg);
      report_errors(res.errors);
      emit_results(res.rows, cfg.output_dir, make_manifest(cfg, command, res.errors));
      std::cout << "wrote " << res.rows.size() << " rows to " << (fs::path(cfg.output_dir) / "results.csv").string()
                << '\n';
    } else if (*grid) {
      const ExperimentConfig cfg = resolve_config(gr_c, gr_o);
      const GridResult res = run_grid(cfg);
      report_errors(res.errors);
      write_text_file(fs::path(cfg.output_dir) / "grid.csv", grid_to_csv(res));
      write_text_file(fs::path(cfg.output_dir) / "manifest.json", make_manifest(cfg, command, res.errors));
      for (const GridEntry& b : res.best)
        std::cout << to_string(b.model) << " lr=" << b.lr << " wd=" << b.weight_decay << " it=" << b.iterations
                  << " nll=" << b.mean_nll << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
