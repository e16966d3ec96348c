#include "causalshift/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <limits>
#include <set>
#include <thread>

#include "causalshift/errors.hpp"
#include "causalshift/serialization.hpp"
#include "json.hpp"

#ifndef CAUSALSHIFT_VERSION
#define CAUSALSHIFT_VERSION "0.0.0"
#endif

namespace causalshift {

using nlohmann::json;

std::string_view version() noexcept { return CAUSALSHIFT_VERSION; }

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

double parse_double(std::string_view s, std::string_view what) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParameterError("cannot parse " + std::string(what) + " from '" + std::string(s) + "'");
  return v;
}

template <class T>
T parse_unsigned(std::string_view s, std::string_view what) {
  T v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParameterError("cannot parse " + std::string(what) + " from '" + std::string(s) + "'");
  return v;
}

}  // namespace

GraphSpec GraphSpec::parse(std::string_view text) {
  const std::string t = lower(text);
  GraphSpec g;
  for (std::string_view prefix : {"er:", "er-"}) {
    if (t.rfind(prefix, 0) == 0) {
      g.kind = Kind::er;
      g.density = parse_double(std::string_view(t).substr(prefix.size()), "graph density");
      if (!(g.density > 0.0)) throw ParameterError("graph density must be positive");
      return g;
    }
  }
  g.kind = Kind::preset;
  g.preset = parse_preset(t);
  return g;
}

std::string GraphSpec::name() const {
  if (kind == Kind::er) return "ER-" + format_double(density);
  return std::string(to_string(preset));
}

Dag GraphSpec::generate(std::size_t n, Rng& rng) const {
  if (kind == Kind::er) return generate_er(n, density, rng);
  return generate_preset(preset, n);
}

namespace {

constexpr std::pair<ModelKind, std::string_view> kModelNames[] = {
    {ModelKind::pseudo_ll, "pseudo_ll"},
    {ModelKind::maml, "maml"},
    {ModelKind::exp_causal, "exp_causal"},
    {ModelKind::exp_anticausal, "exp_anticausal"},
    {ModelKind::exp_skeleton, "exp_skeleton"},
    {ModelKind::l_causal, "l_causal"},
    {ModelKind::bound_zero_shot, "bound_zero_shot"},
    {ModelKind::bound_adaptation, "bound_adaptation"},
};

constexpr std::pair<Metric, std::string_view> kMetricNames[] = {
    {Metric::nll_mean, "nll_mean"},
    {Metric::nll_intervention, "nll_intervention"},
    {Metric::nll_root, "nll_root"},
    {Metric::nll_parents, "nll_parents"},
    {Metric::nll_remainder, "nll_remainder"},
    {Metric::shd, "shd"},
    {Metric::grad_norm_intervened, "grad_norm_intervened"},
    {Metric::grad_norm_others, "grad_norm_others"},
    {Metric::error, "error"},
};

}  // namespace

ModelKind parse_model_kind(std::string_view name) {
  for (const auto& [kind, label] : kModelNames)
    if (label == name) return kind;
  throw ParameterError("unknown model '" + std::string(name) + "'");
}

std::string_view to_string(ModelKind kind) noexcept {
  for (const auto& [k, label] : kModelNames)
    if (k == kind) return label;
  return "unknown";
}

bool is_bound(ModelKind kind) noexcept {
  return kind == ModelKind::bound_zero_shot || kind == ModelKind::bound_adaptation;
}

Metric parse_metric(std::string_view name) {
  for (const auto& [metric, label] : kMetricNames)
    if (label == name) return metric;
  throw ParameterError("unknown metric '" + std::string(name) + "'");
}

std::string_view to_string(Metric metric) noexcept {
  for (const auto& [m, label] : kMetricNames)
    if (m == metric) return label;
  return "unknown";
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ParameterError("config needs at least one seed");
  if (cfg.models.empty()) throw ParameterError("config needs at least one model");
  if (cfg.n < 2) throw ParameterError("config needs n >= 2");
  if (cfg.k < 2) throw ParameterError("config needs k >= 2");
  if (cfg.train_sizes.empty() || std::find(cfg.train_sizes.begin(), cfg.train_sizes.end(), 0u) != cfg.train_sizes.end())
    throw ParameterError("train sizes must be a nonempty list of positive integers");
  if (cfg.adapt_sizes.empty() || std::find(cfg.adapt_sizes.begin(), cfg.adapt_sizes.end(), 0u) != cfg.adapt_sizes.end())
    throw ParameterError("adapt sizes must be a nonempty list of positive integers");
  if (cfg.adapt_steps.empty() || std::find(cfg.adapt_steps.begin(), cfg.adapt_steps.end(), 0u) != cfg.adapt_steps.end())
    throw ParameterError("adapt steps must be a nonempty list of positive integers");
  if (cfg.adapt_methods.empty()) throw ParameterError("config needs at least one adaptation method");
  if (cfg.test.datasets == 0 || cfg.test.samples == 0) throw ParameterError("test suite sizes must be positive");
  if (cfg.jobs == 0) throw ParameterError("jobs must be positive");
  if (!(cfg.train.lr > 0.0)) throw ParameterError("training lr must be positive");
  AdaptConfig a = cfg.adapt;
  a.steps = 1;
  validate(a);
}

// ---------------------------------------------------------------- config I/O

namespace {

json temperature_json(double t) {
  if (std::isinf(t)) return "inf";
  return t;
}

double temperature_from(const json& j) {
  if (j.is_string()) {
    if (lower(j.get<std::string>()) == "inf") return kInfiniteTemperature;
    throw ParameterError("temperature must be a number or \"inf\"");
  }
  return j.get<double>();
}

// Applies `fn(key, value)` to every key, rejecting keys outside `allowed`.
template <class F>
void for_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where, F&& fn) {
  if (!obj.is_object()) throw ParameterError(std::string(where) + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ParameterError("unknown key '" + it.key() + "' in " + std::string(where));
    fn(it.key(), it.value());
  }
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
  json methods = json::array();
  for (AdaptMethod m : cfg.adapt_methods) methods.push_back(std::string(to_string(m)));
  json models = json::array();
  for (ModelKind m : cfg.models) models.push_back(std::string(to_string(m)));
  json j{
      {"graph", cfg.graph.name()},
      {"n", cfg.n},
      {"k", cfg.k},
      {"train_sizes", cfg.train_sizes},
      {"adapt_sizes", cfg.adapt_sizes},
      {"adapt_steps", cfg.adapt_steps},
      {"adapt_methods", methods},
      {"models", models},
      {"seeds", cfg.seeds},
      {"master_seed", cfg.master_seed},
      {"test", {{"datasets", cfg.test.datasets}, {"samples", cfg.test.samples}, {"uniform", cfg.test.uniform}}},
      {"train",
       {{"lr", cfg.train.lr},
        {"weight_decay", cfg.train.weight_decay},
        {"iterations", cfg.train.iterations},
        {"batch_size", cfg.train.batch_size},
        {"inner_lr", cfg.train.inner_lr},
        {"inner_steps", cfg.train.inner_steps},
        {"tasks_per_iteration", cfg.train.tasks_per_iteration}}},
      {"graph_fit",
       {{"lr_u", cfg.graph_fit.lr_u},
        {"lr_v", cfg.graph_fit.lr_v},
        {"iterations", cfg.graph_fit.iterations},
        {"graphs_per_update", cfg.graph_fit.graphs_per_update},
        {"batch_size", cfg.graph_fit.batch_size},
        {"lambda_sparse", cfg.graph_fit.lambda_sparse ? json(*cfg.graph_fit.lambda_sparse) : json(nullptr)},
        {"rounds", cfg.graph_fit.rounds}}},
      {"adapt", {{"lr", cfg.adapt.lr}, {"temperature", temperature_json(cfg.adapt.temperature)}}},
      {"grid",
       {{"lr", cfg.grid.lr}, {"weight_decay", cfg.grid.weight_decay}, {"iterations", cfg.grid.iterations}}},
      {"output_dir", cfg.output_dir},
      {"jobs", cfg.jobs},
      {"save_traces", cfg.save_traces},
  };
  return j.dump(2);
}

ExperimentConfig config_from_json(std::string_view text, ExperimentConfig cfg) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParameterError(std::string("malformed config: ") + e.what());
  }
  try {
    for_keys(root,
             {"graph", "n", "k", "train_sizes", "adapt_sizes", "adapt_steps", "adapt_methods", "models", "seeds",
              "master_seed", "test", "train", "graph_fit", "adapt", "grid", "output_dir", "jobs", "save_traces"},
             "config", [&](const std::string& key, const json& v) {
               if (key == "graph") cfg.graph = GraphSpec::parse(v.get<std::string>());
               else if (key == "n") cfg.n = v.get<std::size_t>();
               else if (key == "k") cfg.k = v.get<std::size_t>();
               else if (key == "train_sizes") cfg.train_sizes = v.get<std::vector<std::size_t>>();
               else if (key == "adapt_sizes") cfg.adapt_sizes = v.get<std::vector<std::size_t>>();
               else if (key == "adapt_steps") cfg.adapt_steps = v.get<std::vector<std::size_t>>();
               else if (key == "adapt_methods") {
                 cfg.adapt_methods.clear();
                 for (const auto& m : v) cfg.adapt_methods.push_back(parse_adapt_method(m.get<std::string>()));
               } else if (key == "models") {
                 cfg.models.clear();
                 for (const auto& m : v) cfg.models.push_back(parse_model_kind(m.get<std::string>()));
               } else if (key == "seeds") cfg.seeds = v.get<std::vector<std::uint64_t>>();
               else if (key == "master_seed") cfg.master_seed = v.get<std::uint64_t>();
               else if (key == "test") {
                 for_keys(v, {"datasets", "samples", "uniform"}, "test", [&](const std::string& k2, const json& x) {
                   if (k2 == "datasets") cfg.test.datasets = x.get<std::size_t>();
                   else if (k2 == "samples") cfg.test.samples = x.get<std::size_t>();
                   else cfg.test.uniform = x.get<bool>();
                 });
               } else if (key == "train") {
                 for_keys(v, {"lr", "weight_decay", "iterations", "batch_size", "inner_lr", "inner_steps", "tasks_per_iteration"},
                          "train", [&](const std::string& k2, const json& x) {
                            TrainConfig& t = cfg.train;
                            if (k2 == "lr") t.lr = x.get<double>();
                            else if (k2 == "weight_decay") t.weight_decay = x.get<double>();
                            else if (k2 == "iterations") t.iterations = x.get<std::size_t>();
                            else if (k2 == "batch_size") t.batch_size = x.get<std::size_t>();
                            else if (k2 == "inner_lr") t.inner_lr = x.get<double>();
                            else if (k2 == "inner_steps") t.inner_steps = x.get<std::size_t>();
                            else t.tasks_per_iteration = x.get<std::size_t>();
                          });
               } else if (key == "graph_fit") {
                 for_keys(v, {"lr_u", "lr_v", "iterations", "graphs_per_update", "batch_size", "lambda_sparse", "rounds"},
                          "graph_fit", [&](const std::string& k2, const json& x) {
                            GraphFitConfig& g = cfg.graph_fit;
                            if (k2 == "lr_u") g.lr_u = x.get<double>();
                            else if (k2 == "lr_v") g.lr_v = x.get<double>();
                            else if (k2 == "iterations") g.iterations = x.get<std::size_t>();
                            else if (k2 == "graphs_per_update") g.graphs_per_update = x.get<std::size_t>();
                            else if (k2 == "batch_size") g.batch_size = x.get<std::size_t>();
                            else if (k2 == "lambda_sparse")
                              g.lambda_sparse = x.is_null() ? std::nullopt : std::optional<double>(x.get<double>());
                            else g.rounds = x.get<std::size_t>();
                          });
               } else if (key == "adapt") {
                 for_keys(v, {"lr", "temperature"}, "adapt", [&](const std::string& k2, const json& x) {
                   if (k2 == "lr") cfg.adapt.lr = x.get<double>();
                   else cfg.adapt.temperature = temperature_from(x);
                 });
               } else if (key == "grid") {
                 for_keys(v, {"lr", "weight_decay", "iterations"}, "grid", [&](const std::string& k2, const json& x) {
                   if (k2 == "lr") cfg.grid.lr = x.get<std::vector<double>>();
                   else if (k2 == "weight_decay") cfg.grid.weight_decay = x.get<std::vector<double>>();
                   else cfg.grid.iterations = x.get<std::vector<std::size_t>>();
                 });
               } else if (key == "output_dir") cfg.output_dir = v.get<std::string>();
               else if (key == "jobs") cfg.jobs = v.get<std::size_t>();
               else cfg.save_traces = v.get<bool>();
             });
  } catch (const json::exception& e) {
    throw ParameterError(std::string("invalid config value: ") + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------- rows

std::string rows_to_csv(std::span<const ResultRow> rows) {
  std::string out(kResultsHeader);
  out += '\n';
  for (const ResultRow& r : rows) {
    out += r.graph_type;
    out += ',' + std::to_string(r.n);
    out += ',' + std::to_string(r.k);
    out += ',' + std::to_string(r.seed);
    out += ',' + r.model;
    out += ',' + std::to_string(r.train_samples);
    out += ',' + std::to_string(r.adapt_samples);
    out += ',' + r.adapt_method;
    out += ',' + std::to_string(r.step);
    out += ',';
    out += to_string(r.metric);
    out += ',' + format_double(r.value);
    out += '\n';
  }
  return out;
}

std::vector<ResultRow> rows_from_csv(std::string_view text) {
  std::vector<ResultRow> rows;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      if (line != kResultsHeader) throw ParameterError("results CSV has an unexpected header");
      header = false;
      continue;
    }
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() != 11) throw ParameterError("results CSV row has the wrong number of fields");
    ResultRow r;
    r.graph_type = std::string(f[0]);
    r.n = parse_unsigned<std::size_t>(f[1], "n");
    r.k = parse_unsigned<std::size_t>(f[2], "k");
    r.seed = parse_unsigned<std::uint64_t>(f[3], "seed");
    r.model = std::string(f[4]);
    r.train_samples = parse_unsigned<std::size_t>(f[5], "train_samples");
    r.adapt_samples = parse_unsigned<std::size_t>(f[6], "adapt_samples");
    r.adapt_method = std::string(f[7]);
    r.step = parse_unsigned<std::size_t>(f[8], "step");
    r.metric = parse_metric(f[9]);
    r.value = parse_double(f[10], "value");
    rows.push_back(std::move(r));
  }
  if (header) throw ParameterError("results CSV is missing its header");
  return rows;
}

void append_record_rows(std::vector<ResultRow>& rows, const ResultRow& prototype, const EvalRecord& record) {
  auto add = [&](Metric m, double v) {
    ResultRow r = prototype;
    r.metric = m;
    r.value = v;
    rows.push_back(std::move(r));
  };
  add(Metric::nll_mean, record.nll_mean);
  add(Metric::nll_intervention, record.nll_intervention);
  if (record.nll_root) add(Metric::nll_root, *record.nll_root);
  if (record.nll_parents) add(Metric::nll_parents, *record.nll_parents);
  if (record.nll_remainder) add(Metric::nll_remainder, *record.nll_remainder);
  if (record.shd) add(Metric::shd, static_cast<double>(*record.shd));
  if (record.grad_norm_intervened) add(Metric::grad_norm_intervened, *record.grad_norm_intervened);
  if (record.grad_norm_others) add(Metric::grad_norm_others, *record.grad_norm_others);
}

// ---------------------------------------------------------------- seeds

namespace {

constexpr std::uint64_t kReplicateTag = 0x7265706cULL;

std::uint64_t model_index(ModelKind kind) { return static_cast<std::uint64_t>(kind); }

}  // namespace

std::uint64_t ReplicateSeeds::data(std::size_t train_size) const { return derive_seed(base, {1, train_size}); }

std::uint64_t ReplicateSeeds::train(std::size_t train_size, ModelKind model) const {
  return derive_seed(base, {2, train_size, model_index(model)});
}

std::uint64_t ReplicateSeeds::adapt(std::size_t adapt_size, std::size_t dataset) const {
  return derive_seed(base, {3, adapt_size, dataset});
}

std::uint64_t ReplicateSeeds::validation() const { return derive_seed(base, "validation"); }

ReplicateSeeds replicate_seeds(std::uint64_t master_seed, std::uint64_t seed) {
  ReplicateSeeds s;
  s.base = derive_seed(master_seed, {kReplicateTag, seed});
  s.scm = derive_seed(s.base, "scm");
  s.test = derive_seed(s.base, "test");
  s.init = derive_seed(s.base, "init");
  return s;
}

Replicate make_replicate(const ExperimentConfig& cfg, std::uint64_t seed) {
  Replicate rep;
  rep.seed = seed;
  rep.seeds = replicate_seeds(cfg.master_seed, seed);
  Rng scm_rng(rep.seeds.scm);
  const Dag dag = cfg.graph.generate(cfg.n, scm_rng);
  rep.scm = init_scm(dag, cfg.k, scm_rng);
  Rng test_rng(rep.seeds.test);
  rep.tests = make_test_suite(rep.scm, cfg.test.datasets, cfg.test.samples, test_rng, cfg.test.uniform);
  return rep;
}

TrainedModel train_model(const ExperimentConfig& cfg, const Replicate& rep, ModelKind model,
                         std::size_t train_size) {
  if (is_bound(model)) throw ParameterError("bound models are not trained");
  Rng data_rng(rep.seeds.data(train_size));
  const TrainingData data = make_training_data(rep.scm, train_size, train_size, data_rng);
  TrainedModel out{ModelStack::initialized(cfg.n, cfg.k, rep.seeds.init), std::nullopt, {}};
  TrainConfig tc = cfg.train;
  tc.seed = rep.seeds.train(train_size, model);
  const Dag& dag = rep.scm.dag();
  const SampleMatrix& obs = data.observational.samples;
  switch (model) {
    case ModelKind::pseudo_ll: out.trace = train_pseudo_ll(out.stack, obs, tc); break;
    case ModelKind::maml: out.trace = train_maml(out.stack, data.interventional, tc); break;
    case ModelKind::exp_causal: out.trace = train_expert(out.stack, dag, ExpertMode::causal, obs, tc); break;
    case ModelKind::exp_anticausal: out.trace = train_expert(out.stack, dag, ExpertMode::anticausal, obs, tc); break;
    case ModelKind::exp_skeleton: out.trace = train_expert(out.stack, dag, ExpertMode::skeleton, obs, tc); break;
    case ModelKind::l_causal: {
      GraphFitConfig gf = cfg.graph_fit;
      gf.seed = tc.seed;
      out.l_causal = train_l_causal(out.stack, obs, data.interventional, tc, gf);
      out.trace = std::move(out.l_causal->trace);
      out.l_causal->trace.clear();
      break;
    }
    default: break;
  }
  return out;
}

// ---------------------------------------------------------------- cells

namespace {

struct Cell {
  ResultRow prototype;
  std::function<std::vector<ResultRow>()> run;
};

// Runs every cell on a bounded pool; output order is the cell order, so
// the result does not depend on the number of workers.
SweepResult run_cells(std::vector<Cell>& cells, std::size_t jobs) {
  std::vector<std::vector<ResultRow>> outputs(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        outputs[i] = cells[i].run();
      } catch (const std::exception& e) {
        errors[i] = e.what();
        ResultRow r = cells[i].prototype;
        r.metric = Metric::error;
        r.value = std::numeric_limits<double>::quiet_NaN();
        outputs[i] = {r};
      }
    }
  };
  const std::size_t workers = std::min(jobs, cells.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  SweepResult result;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    result.rows.insert(result.rows.end(), outputs[i].begin(), outputs[i].end());
    if (!errors[i].empty()) {
      const ResultRow& p = cells[i].prototype;
      result.errors.push_back(p.model + " seed " + std::to_string(p.seed) + " train " +
                              std::to_string(p.train_samples) + ": " + errors[i]);
    }
  }
  return result;
}

std::vector<Replicate> make_replicates(const ExperimentConfig& cfg) {
  std::vector<Replicate> reps;
  reps.reserve(cfg.seeds.size());
  for (std::uint64_t s : cfg.seeds) reps.push_back(make_replicate(cfg, s));
  return reps;
}

ResultRow prototype_row(const ExperimentConfig& cfg, std::uint64_t seed, ModelKind model, std::size_t train_size) {
  ResultRow r;
  r.graph_type = cfg.graph.name();
  r.n = cfg.n;
  r.k = cfg.k;
  r.seed = seed;
  r.model = std::string(to_string(model));
  r.train_samples = train_size;
  return r;
}

void save_traces(const ExperimentConfig& cfg, const ResultRow& proto, const TrainedModel& m) {
  if (!cfg.save_traces) return;
  const std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / "traces";
  const std::string stem = proto.model + "_seed" + std::to_string(proto.seed) + "_train" +
                           std::to_string(proto.train_samples);
  write_text_file(dir / (stem + ".csv"), trace_to_csv(m.trace));
  if (m.l_causal) {
    json history = json::array();
    for (const auto& p : m.l_causal->gamma_history) history.push_back(p);
    json j{{"n", cfg.n}, {"rounds", history}, {"final", json::parse(gamma_to_json(m.l_causal->gamma))}};
    write_text_file(dir / (stem + "_gamma.json"), j.dump());
  }
}

}  // namespace

SweepResult run_generalization_sweep(const ExperimentConfig& cfg) {
  validate(cfg);
  const std::vector<Replicate> reps = make_replicates(cfg);
  std::vector<Cell> cells;
  for (const Replicate& rep : reps) {
    for (std::size_t size : cfg.train_sizes) {
      for (ModelKind model : cfg.models) {
        const ResultRow proto = prototype_row(cfg, rep.seed, model, size);
        cells.push_back({proto, [&cfg, &rep, model, size, proto] {
                           std::vector<ResultRow> rows;
                           const Dag& dag = rep.scm.dag();
                           if (is_bound(model)) {
                             const auto [zero_shot, adapted] = evaluate_bounds(rep.scm, rep.tests);
                             append_record_rows(rows, proto, model == ModelKind::bound_zero_shot ? zero_shot : adapted);
                             return rows;
                           }
                           const TrainedModel m = train_model(cfg, rep, model, size);
                           save_traces(cfg, proto, m);
                           EvalRecord rec = evaluate(m.stack, dag, rep.tests);
                           if (m.l_causal) rec.shd = shd(m.l_causal->graph.dag, dag);
                           append_record_rows(rows, proto, rec);
                           return rows;
                         }});
      }
    }
  }
  return run_cells(cells, cfg.jobs);
}

SweepResult run_adaptation_sweep(const ExperimentConfig& cfg) {
  validate(cfg);
  const std::vector<Replicate> reps = make_replicates(cfg);
  const std::size_t train_size = cfg.train_sizes.front();
  const std::size_t max_steps = *std::max_element(cfg.adapt_steps.begin(), cfg.adapt_steps.end());
  std::set<std::size_t> reported(cfg.adapt_steps.begin(), cfg.adapt_steps.end());
  reported.insert(0);

  std::vector<Cell> cells;
  for (const Replicate& rep : reps) {
    for (ModelKind model : cfg.models) {
      const ResultRow proto = prototype_row(cfg, rep.seed, model, train_size);
      cells.push_back({proto, [&cfg, &rep, model, train_size, max_steps, reported, proto] {
                         std::vector<ResultRow> rows;
                         const Dag& dag = rep.scm.dag();
                         std::optional<TrainedModel> trained;
                         std::optional<std::pair<EvalRecord, EvalRecord>> bounds;
                         if (is_bound(model)) {
                           bounds = evaluate_bounds(rep.scm, rep.tests);
                         } else {
                           trained = train_model(cfg, rep, model, train_size);
                           save_traces(cfg, proto, *trained);
                         }
                         for (std::size_t size : cfg.adapt_sizes) {
                           // Adaptation samples depend only on (replicate, size, dataset),
                           // so every model and method sees the same data.
                           std::vector<Dataset> adapt_sets;
                           for (std::size_t d = 0; d < rep.tests.size(); ++d) {
                             Rng rng(rep.seeds.adapt(size, d));
                             adapt_sets.push_back(sample_interventional(rep.scm, *rep.tests[d].intervention, size, rng));
                           }
                           for (AdaptMethod method : cfg.adapt_methods) {
                             ResultRow row = proto;
                             row.adapt_samples = size;
                             row.adapt_method = std::string(to_string(method));
                             if (bounds) {
                               const EvalRecord& rec = model == ModelKind::bound_zero_shot ? bounds->first : bounds->second;
                               for (std::size_t step : reported) {
                                 row.step = step;
                                 append_record_rows(rows, row, rec);
                               }
                               continue;
                             }
                             std::map<std::size_t, std::vector<DatasetNll>> per_step;
                             double probe_intervened = 0.0;
                             double probe_others = 0.0;
                             AdaptConfig ac = cfg.adapt;
                             ac.method = method;
                             ac.steps = max_steps;
                             for (std::size_t d = 0; d < rep.tests.size(); ++d) {
                               const Dataset& test = rep.tests[d];
                               const std::size_t target = test.intervention->target;
                               const SampleMatrix& samples = adapt_sets[d].samples;
                               const ProbeResult probe = parameter_space_probe(trained->stack, samples, target);
                               probe_intervened += probe.grad_norm_intervened;
                               probe_others += probe.grad_norm_others_mean;
                               ModelStack stack = trained->stack;
                               adapt(stack, samples, ac, target, [&](const ModelStack& s, std::size_t step) {
                                 if (reported.count(step))
                                   per_step[step].push_back(DatasetNll{target, s.per_variable_nll(test.samples)});
                                 return EvalRecord{};
                               });
                             }
                             const double count = static_cast<double>(rep.tests.size());
                             for (const auto& [step, results] : per_step) {
                               row.step = step;
                               EvalRecord rec = aggregate(dag, results);
                               if (step == 0) {
                                 rec.grad_norm_intervened = probe_intervened / count;
                                 rec.grad_norm_others = probe_others / count;
                                 if (trained->l_causal) rec.shd = shd(trained->l_causal->graph.dag, dag);
                               }
                               append_record_rows(rows, row, rec);
                             }
                           }
                         }
                         return rows;
                       }});
    }
  }
  return run_cells(cells, cfg.jobs);
}

// ---------------------------------------------------------------- grid

GridResult run_grid(const ExperimentConfig& cfg) {
  validate(cfg);
  const std::vector<Replicate> reps = make_replicates(cfg);
  std::vector<std::vector<Dataset>> validation;
  for (const Replicate& rep : reps) {
    Rng rng(rep.seeds.validation());
    validation.push_back(make_test_suite(rep.scm, cfg.test.datasets, cfg.test.samples, rng, cfg.test.uniform));
  }
  const std::size_t train_size = cfg.train_sizes.front();

  struct Combo {
    ModelKind model;
    double lr;
    double wd;
    std::size_t iterations;
  };
  std::vector<Combo> combos;
  for (ModelKind model : cfg.models) {
    if (is_bound(model)) continue;
    for (double lr : cfg.grid.lr)
      for (double wd : cfg.grid.weight_decay)
        for (std::size_t it : cfg.grid.iterations) combos.push_back({model, lr, wd, it});
  }

  std::vector<Cell> cells;
  for (const Combo& c : combos) {
    for (std::size_t r = 0; r < reps.size(); ++r) {
      const ResultRow proto = prototype_row(cfg, reps[r].seed, c.model, train_size);
      cells.push_back({proto, [&cfg, &reps, &validation, c, r, train_size, proto] {
                         ExperimentConfig local = cfg;
                         local.train.lr = c.lr;
                         local.train.weight_decay = c.wd;
                         local.train.iterations = c.iterations;
                         const TrainedModel m = train_model(local, reps[r], c.model, train_size);
                         ResultRow row = proto;
                         row.value = evaluate(m.stack, reps[r].scm.dag(), validation[r]).nll_mean;
                         return std::vector<ResultRow>{row};
                       }});
    }
  }
  const SweepResult sweep = run_cells(cells, cfg.jobs);

  GridResult result;
  result.errors = sweep.errors;
  const std::size_t per_combo = reps.size();
  for (std::size_t ci = 0; ci < combos.size(); ++ci) {
    double sum = 0.0;
    for (std::size_t r = 0; r < per_combo; ++r) {
      const ResultRow& row = sweep.rows[ci * per_combo + r];
      sum += row.metric == Metric::error ? std::numeric_limits<double>::quiet_NaN() : row.value;
    }
    const Combo& c = combos[ci];
    result.entries.push_back({c.model, c.lr, c.wd, c.iterations, sum / static_cast<double>(per_combo)});
  }
  for (ModelKind model : cfg.models) {
    const GridEntry* best = nullptr;
    for (const GridEntry& e : result.entries)
      if (e.model == model && !std::isnan(e.mean_nll) && (!best || e.mean_nll < best->mean_nll)) best = &e;
    if (best) result.best.push_back(*best);
  }
  return result;
}

std::string grid_to_csv(const GridResult& result) {
  std::string out = "model,lr,weight_decay,iterations,mean_nll,best\n";
  for (const GridEntry& e : result.entries) {
    const bool best = std::any_of(result.best.begin(), result.best.end(), [&](const GridEntry& b) {
      return b.model == e.model && b.lr == e.lr && b.weight_decay == e.weight_decay && b.iterations == e.iterations;
    });
    out += std::string(to_string(e.model)) + ',' + format_double(e.lr) + ',' + format_double(e.weight_decay) + ',' +
           std::to_string(e.iterations) + ',' + format_double(e.mean_nll) + ',' + (best ? "1" : "0") + '\n';
  }
  return out;
}

// ---------------------------------------------------------------- output

void emit_results(std::span<const ResultRow> rows, const std::filesystem::path& output_dir,
                  std::string_view manifest_json) {
  if (rows.empty()) throw ParameterError("no result rows to write");
  write_text_file(output_dir / "results.csv", rows_to_csv(rows));
  write_text_file(output_dir / "manifest.json", manifest_json);
}

std::string make_manifest(const ExperimentConfig& cfg, std::string_view command,
                          std::span<const std::string> errors) {
  json seeds = json::array();
  for (std::uint64_t s : cfg.seeds) {
    const ReplicateSeeds r = replicate_seeds(cfg.master_seed, s);
    seeds.push_back({{"seed", s}, {"base", r.base}, {"scm", r.scm}, {"test", r.test}, {"init", r.init}});
  }
  json j{{"version", std::string(version())},
         {"command", std::string(command)},
         {"master_seed", cfg.master_seed},
         {"replicate_seeds", seeds},
         {"config", json::parse(config_to_json(cfg))},
         {"errors", std::vector<std::string>(errors.begin(), errors.end())}};
  return j.dump(2) + "\n";
}

}  // namespace causalshift
