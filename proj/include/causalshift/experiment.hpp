#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "causalshift/adaptation.hpp"
#include "causalshift/graph.hpp"
#include "causalshift/metrics.hpp"
#include "causalshift/scm.hpp"
#include "causalshift/training.hpp"

namespace causalshift {

/// Library version string written into manifests.
std::string_view version() noexcept;

/// Random ER graph with a given density, or one of the presets.
struct GraphSpec {
  enum class Kind { er, preset };
  Kind kind = Kind::er;
  double density = 1.0;
  Preset preset = Preset::chain;

  /// Accepts "er:<d>", "ER-<d>" or a preset name.
  static GraphSpec parse(std::string_view text);
  /// "ER-1", "ER-2.5", "chain", ...
  std::string name() const;
  Dag generate(std::size_t n, Rng& rng) const;

  friend bool operator==(const GraphSpec&, const GraphSpec&) = default;
};

enum class ModelKind {
  pseudo_ll,
  maml,
  exp_causal,
  exp_anticausal,
  exp_skeleton,
  l_causal,
  bound_zero_shot,
  bound_adaptation
};

ModelKind parse_model_kind(std::string_view name);
std::string_view to_string(ModelKind kind) noexcept;
bool is_bound(ModelKind kind) noexcept;

struct TestSuiteConfig {
  std::size_t datasets = 20;
  std::size_t samples = 500;
  bool uniform = false;  ///< redraw the intervened value per sample

  friend bool operator==(const TestSuiteConfig&, const TestSuiteConfig&) = default;
};

struct GridConfig {
  std::vector<double> lr{1e-2, 1e-3, 1e-4};
  std::vector<double> weight_decay{1e-4, 1e-5, 0.0};
  std::vector<std::size_t> iterations{1000};

  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct ExperimentConfig {
  GraphSpec graph;
  std::size_t n = 10;
  std::size_t k = kDefaultCategories;
  std::vector<std::size_t> train_sizes{1000};
  std::vector<std::size_t> adapt_sizes{100};
  /// Steps at which adaptation results are reported; adaptation runs for
  /// the largest entry. Step 0 (zero-shot) is always reported.
  std::vector<std::size_t> adapt_steps{1, 2, 3, 4, 5};
  std::vector<AdaptMethod> adapt_methods{AdaptMethod::unconstrained};
  std::vector<ModelKind> models{ModelKind::exp_causal, ModelKind::pseudo_ll, ModelKind::bound_zero_shot};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::uint64_t master_seed = 0;
  TestSuiteConfig test;
  TrainConfig train;
  GraphFitConfig graph_fit;
  AdaptConfig adapt;
  GridConfig grid;
  std::string output_dir = "results";
  std::size_t jobs = 1;
  bool save_traces = false;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Throws ParameterError on empty seeds/models or non-positive sizes.
void validate(const ExperimentConfig& cfg);

/// JSON object with every field; unknown keys are rejected on input and
/// missing keys keep their current value.
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(std::string_view text, ExperimentConfig base = {});

enum class Metric {
  nll_mean,
  nll_intervention,
  nll_root,
  nll_parents,
  nll_remainder,
  shd,
  grad_norm_intervened,
  grad_norm_others,
  error
};

Metric parse_metric(std::string_view name);
std::string_view to_string(Metric metric) noexcept;

struct ResultRow {
  std::string graph_type;
  std::size_t n = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string model;
  std::size_t train_samples = 0;
  std::size_t adapt_samples = 0;
  std::string adapt_method = "none";
  std::size_t step = 0;
  Metric metric = Metric::nll_mean;
  double value = 0.0;

  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

inline constexpr std::string_view kResultsHeader =
    "graph_type,n,k,seed,model,train_samples,adapt_samples,adapt_method,step,metric,value";

std::string rows_to_csv(std::span<const ResultRow> rows);
std::vector<ResultRow> rows_from_csv(std::string_view text);

/// Appends one row per available metric of the record.
void append_record_rows(std::vector<ResultRow>& rows, const ResultRow& prototype, const EvalRecord& record);

struct SweepResult {
  std::vector<ResultRow> rows;
  std::vector<std::string> errors;  ///< one message per failed cell
};

/// Seeds of one replicate, derived from the master seed.
struct ReplicateSeeds {
  std::uint64_t base = 0;
  std::uint64_t scm = 0;
  std::uint64_t test = 0;
  std::uint64_t init = 0;

  std::uint64_t data(std::size_t train_size) const;
  std::uint64_t train(std::size_t train_size, ModelKind model) const;
  std::uint64_t adapt(std::size_t adapt_size, std::size_t dataset) const;
  std::uint64_t validation() const;
};

ReplicateSeeds replicate_seeds(std::uint64_t master_seed, std::uint64_t seed);

/// Everything shared by the cells of one replicate.
struct Replicate {
  std::uint64_t seed = 0;
  ReplicateSeeds seeds{};
  GroundTruthScm scm;
  std::vector<Dataset> tests;
};

Replicate make_replicate(const ExperimentConfig& cfg, std::uint64_t seed);

struct TrainedModel {
  ModelStack stack;
  std::optional<LCausalResult> l_causal;
  LossTrace trace;
};

/// Trains one non-bound model on data drawn for (replicate, train_size).
TrainedModel train_model(const ExperimentConfig& cfg, const Replicate& rep, ModelKind model,
                         std::size_t train_size);

/// Zero-shot evaluation over (seed, train_size, model).
SweepResult run_generalization_sweep(const ExperimentConfig& cfg);

/// Trains every model once at train_sizes[0], then adapts it on fresh
/// samples of each test intervention for every adapt size and method.
SweepResult run_adaptation_sweep(const ExperimentConfig& cfg);

struct GridEntry {
  ModelKind model;
  double lr;
  double weight_decay;
  std::size_t iterations;
  double mean_nll;  ///< mean over seeds on a validation suite
};

struct GridResult {
  std::vector<GridEntry> entries;
  std::vector<GridEntry> best;  ///< one per model, lowest mean_nll
  std::vector<std::string> errors;
};

/// Evaluates every (lr, weight decay, iterations) combination per model on
/// an interventional validation suite drawn independently of the test suite.
GridResult run_grid(const ExperimentConfig& cfg);
std::string grid_to_csv(const GridResult& result);

/// Writes results.csv and manifest.json into the directory. Throws
/// ParameterError on an empty row set and IoError on write failures.
void emit_results(std::span<const ResultRow> rows, const std::filesystem::path& output_dir,
                  std::string_view manifest_json);

/// Manifest with the resolved config, version, command and seeds.
std::string make_manifest(const ExperimentConfig& cfg, std::string_view command,
                          std::span<const std::string> errors);

}  // namespace causalshift
