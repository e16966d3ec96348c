#include "causalshift/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include "causalshift/errors.hpp"

namespace causalshift {

namespace {

constexpr std::uint64_t kBatchStream = 0x6261746368ULL;
constexpr std::uint64_t kMaskStream = 0x6d61736bULL;
constexpr std::uint64_t kTaskStream = 0x7461736bULL;
constexpr std::uint64_t kGraphStream = 0x67726170ULL;
constexpr std::uint64_t kRoundStream = 0x726f756eULL;

// Yields full-batch references or epoch-shuffled minibatches.
class BatchSampler {
 public:
  BatchSampler(const SampleMatrix& data, std::size_t batch) : data_(data), batch_(batch) {
    if (batch_ < data_.rows()) {
      order_.resize(data_.rows());
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      cursor_ = order_.size();
    }
  }

  const SampleMatrix& next(Rng& rng) {
    if (order_.empty()) return data_;
    if (cursor_ + batch_ > order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng);
      cursor_ = 0;
    }
    buffer_ = data_.select(std::span<const std::size_t>(order_).subspan(cursor_, batch_));
    cursor_ += batch_;
    return buffer_;
  }

 private:
  const SampleMatrix& data_;
  std::size_t batch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  SampleMatrix buffer_;
};

void check_training_data(const ModelStack& stack, const SampleMatrix& data) {
  if (stack.n() < 2) throw ParameterError("training needs at least two variables");
  if (data.empty()) throw ParameterError("training data is empty");
  if (data.width() != stack.n()) throw ParameterError("training data width does not match the stack");
}

void check_tasks(const ModelStack& stack, std::span<const Dataset> tasks) {
  if (stack.n() < 2) throw ParameterError("training needs at least two variables");
  if (tasks.empty()) throw ParameterError("no training tasks");
  for (const Dataset& d : tasks) {
    if (d.samples.empty()) throw ParameterError("training task is empty");
    if (d.samples.width() != stack.n()) throw ParameterError("task width does not match the stack");
  }
}

struct TaskDraw {
  SampleMatrix inner;
  SampleMatrix outer;
};

TaskDraw draw_task(std::span<const Dataset> tasks, Rng& rng) {
  const SampleMatrix& data = tasks[uniform_index(rng, tasks.size())].samples;
  const std::size_t rows = data.rows();
  if (rows == 1) return {data, data};
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t half = rows / 2;
  const std::span<const std::size_t> all(idx);
  return {data.select(all.first(half)), data.select(all.subspan(half))};
}

// Shared outer loop of the meta-learning variants.
template <class TaskGradient>
LossTrace train_on_tasks(ModelStack& stack, std::span<const Dataset> tasks, const TrainConfig& cfg,
                         TaskGradient&& task_gradient) {
  check_tasks(stack, tasks);
  if (cfg.tasks_per_iteration == 0) throw ParameterError("tasks_per_iteration must be positive");
  stack.set_masks(pseudo_ll_mask(stack.n()));
  LossTrace trace;
  trace.reserve(cfg.iterations * stack.n());
  for (std::size_t i = 0; i < stack.n(); ++i) {
    MaskedMlp& mlp = stack.module(i);
    Rng rng(derive_seed(cfg.seed, {kTaskStream, i}));
    Optimizer outer(OptimizerConfig::adam(cfg.lr, cfg.weight_decay));
    Gradients sum(mlp.n() * mlp.k(), mlp.hidden(), mlp.k());
    MaskedMlp scratch = mlp;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      sum.for_each_array([](std::vector<double>& a) { std::fill(a.begin(), a.end(), 0.0); });
      double loss = 0.0;
      for (std::size_t t = 0; t < cfg.tasks_per_iteration; ++t) {
        const TaskDraw draw = draw_task(tasks, rng);
        BackwardResult r = task_gradient(mlp, scratch, draw);
        sum += r.grads;
        loss += r.mean_nll;
      }
      const double inv = 1.0 / static_cast<double>(cfg.tasks_per_iteration);
      sum *= inv;
      outer.step(mlp, sum);
      trace.push_back({0, it, i, loss * inv});
    }
  }
  return trace;
}

// Adam on the two logit matrices of a SoftAdjacency.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t size) : m(size, 0.0), v(size, 0.0) {}

  void step(std::vector<double>& p, const std::vector<double>& g, double lr) {
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double eps = 1e-8;
    ++t;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

}  // namespace

std::size_t resolve_batch_size(const TrainConfig& cfg, std::size_t dataset_size) {
  if (cfg.batch_size != 0) return std::min(cfg.batch_size, dataset_size);
  return dataset_size <= kFullBatchLimit ? dataset_size : kDefaultMinibatch;
}

std::string trace_to_csv(const LossTrace& trace) {
  std::string out = "round,iteration,module,loss\n";
  char buf[64];
  for (const TraceEntry& e : trace) {
    out += std::to_string(e.round);
    out += ',';
    out += std::to_string(e.iteration);
    out += ',';
    out += std::to_string(e.module);
    out += ',';
    auto res = std::to_chars(buf, buf + sizeof buf, e.loss);
    out.append(buf, res.ptr);
    out += '\n';
  }
  return out;
}

BinaryMatrix pseudo_ll_mask(std::size_t n) {
  if (n < 2) throw ParameterError("pseudo_ll_mask requires n >= 2");
  BinaryMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) m.set(i, j);
  return m;
}

ExpertMode parse_expert_mode(std::string_view name) {
  if (name == "causal") return ExpertMode::causal;
  if (name == "anticausal") return ExpertMode::anticausal;
  if (name == "skeleton") return ExpertMode::skeleton;
  throw ParameterError("unknown expert mode '" + std::string(name) + "'");
}

std::string_view to_string(ExpertMode mode) noexcept {
  switch (mode) {
    case ExpertMode::causal: return "causal";
    case ExpertMode::anticausal: return "anticausal";
    case ExpertMode::skeleton: return "skeleton";
  }
  return "unknown";
}

BinaryMatrix expert_mask(const Dag& dag, ExpertMode mode) {
  switch (mode) {
    case ExpertMode::causal: return dag.adjacency();
    case ExpertMode::anticausal: return anticausal_mask(dag);
    case ExpertMode::skeleton: return skeleton_mask(dag);
  }
  throw ParameterError("unknown expert mode");
}

LossTrace train_with_mask(ModelStack& stack, const BinaryMatrix& masks, const SampleMatrix& data,
                          const TrainConfig& cfg) {
  check_training_data(stack, data);
  stack.set_masks(masks);
  const std::size_t batch = resolve_batch_size(cfg, data.rows());
  LossTrace trace;
  trace.reserve(cfg.iterations * stack.n());
  for (std::size_t i = 0; i < stack.n(); ++i) {
    MaskedMlp& mlp = stack.module(i);
    Rng rng(derive_seed(cfg.seed, {kBatchStream, i}));
    BatchSampler sampler(data, batch);
    Optimizer opt(OptimizerConfig::adam(cfg.lr, cfg.weight_decay));
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      const BackwardResult r = mlp.backward(sampler.next(rng));
      opt.step(mlp, r.grads);
      trace.push_back({0, it, i, r.mean_nll});
    }
  }
  return trace;
}

LossTrace train_pseudo_ll(ModelStack& stack, const SampleMatrix& observational, const TrainConfig& cfg) {
  return train_with_mask(stack, pseudo_ll_mask(stack.n()), observational, cfg);
}

LossTrace train_expert(ModelStack& stack, const Dag& dag, ExpertMode mode,
                       const SampleMatrix& observational, const TrainConfig& cfg) {
  if (dag.size() != stack.n()) throw ParameterError("graph size does not match the stack");
  return train_with_mask(stack, expert_mask(dag, mode), observational, cfg);
}

LossTrace train_maml(ModelStack& stack, std::span<const Dataset> tasks, const TrainConfig& cfg) {
  return train_on_tasks(stack, tasks, cfg, [&cfg](const MaskedMlp& mlp, MaskedMlp& adapted, const TaskDraw& d) {
    adapted.params() = mlp.params();
    Optimizer inner(OptimizerConfig::sgd(cfg.inner_lr));
    for (std::size_t s = 0; s < cfg.inner_steps; ++s) inner.step(adapted, adapted.backward(d.inner).grads);
    return adapted.backward(d.outer);
  });
}

LossTrace train_pseudo_ll_on_tasks(ModelStack& stack, std::span<const Dataset> tasks,
                                   const TrainConfig& cfg) {
  return train_on_tasks(stack, tasks, cfg, [](const MaskedMlp& mlp, MaskedMlp&, const TaskDraw& d) {
    return mlp.backward(d.outer);
  });
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError("logit requires 0 < p < 1");
  return std::log(p) - std::log1p(-p);
}

SoftAdjacency::SoftAdjacency(std::size_t n, double logit_value)
    : n_(n), u_(n * n, logit_value), v_(n * n, logit_value) {}

SoftAdjacency SoftAdjacency::with_probability(std::size_t n, double p) {
  double l = logit(std::sqrt(p));
  while (sigmoid(l) * sigmoid(l) > p) l = std::nextafter(l, -std::numeric_limits<double>::infinity());
  return SoftAdjacency(n, l);
}

SoftAdjacency SoftAdjacency::saturated(const BinaryMatrix& adj) {
  // sigmoid(+-40) rounds to exactly 1 and 4e-18 respectively.
  constexpr double big = 40.0;
  SoftAdjacency g(adj.size(), -big);
  for (std::size_t i = 0; i < adj.size(); ++i)
    for (std::size_t j = 0; j < adj.size(); ++j)
      if (adj(i, j)) g.u(i, j) = g.v(i, j) = big;
  return g;
}

double SoftAdjacency::probability(std::size_t i, std::size_t j) const noexcept {
  if (i == j) return 0.0;
  return sigmoid(u(i, j)) * sigmoid(v(i, j));
}

std::vector<double> SoftAdjacency::probabilities() const {
  std::vector<double> out(n_ * n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) out[i * n_ + j] = probability(i, j);
  return out;
}

namespace {

void sample_mask_row(const SoftAdjacency& gamma, std::size_t i, Rng& rng, std::vector<std::uint8_t>& row) {
  for (std::size_t j = 0; j < gamma.size(); ++j)
    row[j] = (i != j && uniform01(rng) < gamma.probability(i, j)) ? 1 : 0;
}

}  // namespace

BinaryMatrix sample_masks(const SoftAdjacency& gamma, Rng& rng) {
  const std::size_t n = gamma.size();
  BinaryMatrix m(n);
  std::vector<std::uint8_t> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    sample_mask_row(gamma, i, rng, row);
    for (std::size_t j = 0; j < n; ++j) m.set(i, j, row[j] != 0);
  }
  return m;
}

double resolve_lambda(const GraphFitConfig& cfg, std::size_t k) {
  return cfg.lambda_sparse.value_or(0.004 * std::log(static_cast<double>(k)));
}

LossTrace distribution_fitting_phase(ModelStack& stack, const SoftAdjacency& gamma,
                                     const SampleMatrix& observational, const TrainConfig& cfg,
                                     std::size_t round) {
  check_training_data(stack, observational);
  if (gamma.size() != stack.n()) throw ParameterError("structural parameters do not match the stack");
  const std::size_t batch = resolve_batch_size(cfg, observational.rows());
  LossTrace trace;
  trace.reserve(cfg.iterations * stack.n());
  std::vector<std::uint8_t> row(stack.n());
  for (std::size_t i = 0; i < stack.n(); ++i) {
    MaskedMlp& mlp = stack.module(i);
    Rng rng(derive_seed(cfg.seed, {kBatchStream, i}));
    Rng mask_rng(derive_seed(cfg.seed, {kMaskStream, i}));
    BatchSampler sampler(observational, batch);
    Optimizer opt(OptimizerConfig::adam(cfg.lr, cfg.weight_decay));
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      const SampleMatrix& b = sampler.next(rng);
      sample_mask_row(gamma, i, mask_rng, row);
      const BackwardResult r = mlp.backward(b, row);
      opt.step(mlp, r.grads);
      trace.push_back({round, it, i, r.mean_nll});
    }
    mlp.set_mask(row);
  }
  return trace;
}

void graph_fitting_phase(SoftAdjacency& gamma, const ModelStack& stack,
                         std::span<const Dataset> interventional, const GraphFitConfig& cfg,
                         std::size_t round) {
  const std::size_t n = stack.n();
  if (gamma.size() != n) throw ParameterError("structural parameters do not match the stack");
  check_tasks(stack, interventional);
  for (const Dataset& d : interventional)
    if (!d.intervention || d.intervention->target >= n)
      throw ParameterError("graph fitting needs intervention datasets with a valid target");
  if (cfg.graphs_per_update == 0 || cfg.batch_size == 0)
    throw ParameterError("graph fitting needs positive graphs_per_update and batch_size");

  const double lambda = resolve_lambda(cfg, stack.k());
  Rng rng(derive_seed(cfg.seed, {kGraphStream, round}));
  AdamState adam_u(n * n);
  AdamState adam_v(n * n);
  std::vector<double> contrast(n * n);
  std::vector<double> grad_u(n * n);
  std::vector<double> grad_v(n * n);
  std::vector<std::uint8_t> row(n);
  std::vector<std::size_t> idx;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Dataset& d = interventional[uniform_index(rng, interventional.size())];
    const std::size_t target = d.intervention->target;
    const std::size_t rows = d.samples.rows();
    const std::size_t b = std::min(cfg.batch_size, rows);
    idx.resize(rows);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t s = 0; s < b; ++s) std::swap(idx[s], idx[s + uniform_index(rng, rows - s)]);
    const SampleMatrix batch = d.samples.select(std::span<const std::size_t>(idx).first(b));

    std::fill(contrast.begin(), contrast.end(), 0.0);
    for (std::size_t g = 0; g < cfg.graphs_per_update; ++g) {
      for (std::size_t i = 0; i < n; ++i) {
        sample_mask_row(gamma, i, rng, row);
        if (i == target) continue;
        stack.module(i).accumulate_edge_contrasts(batch, row,
                                                  std::span<double>(contrast).subspan(i * n, n));
      }
    }

    const double inv = 1.0 / static_cast<double>(cfg.graphs_per_update * b);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t e = i * n + j;
        if (i == j) {
          grad_u[e] = grad_v[e] = 0.0;
          continue;
        }
        const double gp = contrast[e] * inv + lambda;
        const double su = sigmoid(gamma.u(i, j));
        const double sv = sigmoid(gamma.v(i, j));
        grad_u[e] = gp * su * (1.0 - su) * sv;
        grad_v[e] = gp * su * sv * (1.0 - sv);
      }
    }
    adam_u.step(gamma.u_values(), grad_u, cfg.lr_u);
    adam_v.step(gamma.v_values(), grad_v, cfg.lr_v);
  }
}

ExtractedGraph extract_graph(const SoftAdjacency& gamma, double threshold) {
  const std::size_t n = gamma.size();
  BinaryMatrix adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && gamma.probability(i, j) > threshold) adj.set(i, j);

  ExtractedGraph out;
  for (auto cycle = find_cycle(adj); !cycle.empty(); cycle = find_cycle(adj)) {
    const auto weakest = std::min_element(cycle.begin(), cycle.end(), [&](const Edge& a, const Edge& b) {
      return gamma.probability(a.child, a.parent) < gamma.probability(b.child, b.parent);
    });
    adj.set(weakest->child, weakest->parent, false);
    out.repaired = true;
    ++out.removed_edges;
  }
  out.dag = Dag(std::move(adj));
  return out;
}

LCausalResult train_l_causal(ModelStack& stack, const SampleMatrix& observational,
                             std::span<const Dataset> interventional, const TrainConfig& cfg,
                             const GraphFitConfig& gf) {
  check_training_data(stack, observational);
  check_tasks(stack, interventional);
  LCausalResult result;
  result.gamma = SoftAdjacency::with_probability(stack.n(), 0.5);
  for (std::size_t r = 0; r < gf.rounds; ++r) {
    TrainConfig round_cfg = cfg;
    round_cfg.seed = derive_seed(cfg.seed, {kRoundStream, r});
    LossTrace t = distribution_fitting_phase(stack, result.gamma, observational, round_cfg, r);
    result.trace.insert(result.trace.end(), t.begin(), t.end());
    graph_fitting_phase(result.gamma, stack, interventional, gf, r);
    result.gamma_history.push_back(result.gamma.probabilities());
  }
  result.graph = extract_graph(result.gamma);
  stack.set_masks(result.graph.dag.adjacency());
  return result;
}

}  // namespace causalshift
