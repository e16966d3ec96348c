#include "causalshift/scm.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "causalshift/errors.hpp"

namespace causalshift {

GroundTruthScm::GroundTruthScm(Dag dag, std::size_t k, std::vector<MaskedMlp> mechanisms)
    : dag_(std::move(dag)), k_(k), mechanisms_(std::move(mechanisms)) {
  const std::size_t n = dag_.size();
  if (k_ < 2) throw ParameterError("scm: k must be at least 2");
  if (mechanisms_.size() != n) throw ParameterError("scm: one mechanism per node required");
  for (std::size_t i = 0; i < n; ++i) {
    const MaskedMlp& m = mechanisms_[i];
    if (m.n() != n || m.k() != k_ || m.variable() != i)
      throw ParameterError("scm: mechanism " + std::to_string(i) + " has the wrong shape");
    const auto row = dag_.adjacency().row(i);
    if (!std::equal(row.begin(), row.end(), m.mask().begin(), m.mask().end()))
      throw ParameterError("scm: mechanism " + std::to_string(i) + " must read exactly its parents");
  }
  order_ = topological_order(dag_);
}

std::vector<double> GroundTruthScm::cpd(std::size_t i, std::span<const int> assignment) const {
  if (i >= size()) throw ParameterError("cpd: node index out of range");
  auto p = mechanisms_[i].forward(assignment);
  for (double& x : p) x = std::exp(x);
  return p;
}

std::vector<double> orthogonal_matrix(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
  const bool tall = rows >= cols;
  const auto r = static_cast<Eigen::Index>(tall ? rows : cols);
  const auto c = static_cast<Eigen::Index>(tall ? cols : rows);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = normal(rng);

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  // Fix column signs so the result is Haar distributed.
  const Eigen::MatrixXd rmat = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < c; ++j)
    if (rmat(j, j) < 0) q.col(j) *= -1.0;

  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = tall ? q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                            : q(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      out[i * cols + j] = gain * v;
    }
  return out;
}

GroundTruthScm init_scm(const Dag& dag, std::size_t k, Rng& rng, std::size_t hidden) {
  if (k < 2) throw ParameterError("init_scm: k must be at least 2");
  const std::size_t n = dag.size();
  std::uniform_real_distribution<double> bias(-kScmBiasRange, kScmBiasRange);
  std::vector<MaskedMlp> mechanisms;
  mechanisms.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    MaskedMlp m(n, k, i, hidden);
    m.set_mask(dag.adjacency().row(i));
    MlpParams& p = m.params();
    p.w1 = orthogonal_matrix(n * k, hidden, kScmWeightGain, rng);
    p.w2 = orthogonal_matrix(hidden, k, kScmWeightGain, rng);
    for (double& b : p.b1) b = bias(rng);
    for (double& b : p.b2) b = bias(rng);
    mechanisms.push_back(std::move(m));
  }
  return GroundTruthScm(dag, k, std::move(mechanisms));
}

namespace {

int draw_category(std::span<const double> logp, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t c = 0; c < logp.size(); ++c) {
    acc += std::exp(logp[c]);
    if (u < acc) return static_cast<int>(c);
  }
  return static_cast<int>(logp.size() - 1);
}

Dataset ancestral(const GroundTruthScm& scm, const std::optional<Intervention>& intervention,
                  std::size_t count, Rng& rng) {
  const std::size_t n = scm.size();
  Dataset out{SampleMatrix(n), intervention};
  out.samples.reserve(count);
  std::vector<int> x(n, 0);
  for (std::size_t s = 0; s < count; ++s) {
    std::fill(x.begin(), x.end(), 0);
    for (std::size_t node : scm.order()) {
      if (intervention && node == intervention->target) {
        x[node] = intervention->value ? *intervention->value
                                      : static_cast<int>(uniform_index(rng, scm.k()));
        continue;
      }
      // Non-parents are still zero or already sampled; the mask ignores them.
      const auto logp = scm.mechanism(node).forward(x);
      x[node] = draw_category(logp, rng);
    }
    out.samples.push_back(x);
  }
  return out;
}

void check_intervention(const GroundTruthScm& scm, const Intervention& iv) {
  if (iv.target >= scm.size()) throw ParameterError("intervention target out of range");
  if (iv.value && (*iv.value < 0 || static_cast<std::size_t>(*iv.value) >= scm.k()))
    throw ParameterError("intervention value out of range");
}

}  // namespace

Dataset sample_observational(const GroundTruthScm& scm, std::size_t count, Rng& rng) {
  return ancestral(scm, std::nullopt, count, rng);
}

Dataset sample_interventional(const GroundTruthScm& scm, const Intervention& intervention,
                              std::size_t count, Rng& rng) {
  check_intervention(scm, intervention);
  return ancestral(scm, intervention, count, rng);
}

TrainingData make_training_data(const GroundTruthScm& scm, std::size_t n_obs, std::size_t n_int,
                                Rng& rng) {
  TrainingData out;
  out.observational = sample_observational(scm, n_obs, rng);
  const std::size_t n = scm.size();
  const std::size_t datasets = std::min(n, n_int);
  for (std::size_t l = 0; l < datasets; ++l) {
    const std::size_t size = n_int / datasets + (l < n_int % datasets ? 1 : 0);
    Intervention iv{l % n, static_cast<int>(uniform_index(rng, scm.k()))};
    out.interventional.push_back(sample_interventional(scm, iv, size, rng));
  }
  return out;
}

std::vector<Dataset> make_test_suite(const GroundTruthScm& scm, std::size_t datasets,
                                     std::size_t samples_per_dataset, Rng& rng, bool uniform) {
  const std::size_t n = scm.size();
  std::vector<std::size_t> perm(n);
  std::vector<Dataset> out;
  out.reserve(datasets);
  for (std::size_t d = 0; d < datasets; ++d) {
    if (d % n == 0) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
    }
    Intervention iv{perm[d % n], std::nullopt};
    if (!uniform) iv.value = static_cast<int>(uniform_index(rng, scm.k()));
    out.push_back(sample_interventional(scm, iv, samples_per_dataset, rng));
  }
  return out;
}

std::vector<double> bound_zero_shot(const GroundTruthScm& scm, const Dataset& data) {
  if (data.samples.width() != scm.size()) throw ParameterError("bound: dataset width mismatch");
  if (data.samples.empty()) throw ParameterError("bound: empty dataset");
  std::vector<double> out(scm.size());
  for (std::size_t i = 0; i < scm.size(); ++i) out[i] = scm.mechanism(i).mean_nll(data.samples);
  return out;
}

std::vector<double> bound_adaptation(const GroundTruthScm& scm, const Dataset& data) {
  if (!data.intervention) throw ParameterError("bound_adaptation requires an interventional dataset");
  auto out = bound_zero_shot(scm, data);
  out[data.intervention->target] =
      data.intervention->uniform() ? std::log(static_cast<double>(scm.k())) : 0.0;
  return out;
}

}  // namespace causalshift
