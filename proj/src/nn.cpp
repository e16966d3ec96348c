#include "causalshift/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "causalshift/errors.hpp"

namespace causalshift {

double& MlpParams::at(std::size_t flat) {
  return const_cast<double&>(static_cast<const MlpParams&>(*this).ref(flat));
}

double MlpParams::at(std::size_t flat) const { return ref(flat); }

const double& MlpParams::ref(std::size_t flat) const {
  if (flat < w1.size()) return w1[flat];
  flat -= w1.size();
  if (flat < b1.size()) return b1[flat];
  flat -= b1.size();
  if (flat < w2.size()) return w2[flat];
  flat -= w2.size();
  if (flat < b2.size()) return b2[flat];
  throw ParameterError("parameter index out of range");
}

MlpParams& MlpParams::operator+=(const MlpParams& other) {
  auto add = [](std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ParameterError("parameter shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  add(w1, other.w1);
  add(b1, other.b1);
  add(w2, other.w2);
  add(b2, other.b2);
  return *this;
}

MlpParams& MlpParams::operator*=(double factor) {
  for_each_array([factor](std::vector<double>& a) {
    for (double& x : a) x *= factor;
  });
  return *this;
}

double grad_norm(const Gradients& grads) {
  double sum = 0.0;
  grads.for_each_array([&sum](const std::vector<double>& a) {
    for (double x : a) sum += x * x;
  });
  return std::sqrt(sum);
}

MaskedMlp::MaskedMlp(std::size_t n, std::size_t k, std::size_t variable, std::size_t hidden)
    : n_(n), k_(k), hidden_(hidden), variable_(variable), mask_(n, 0), params_(n * k, hidden, k) {
  if (n == 0 || k < 2 || hidden == 0) throw ParameterError("MaskedMlp: need n >= 1, k >= 2, hidden >= 1");
  if (variable >= n) throw ParameterError("MaskedMlp: variable index out of range");
}

void MaskedMlp::check_mask(std::span<const std::uint8_t> mask) const {
  if (mask.size() != n_) throw ParameterError("mask length does not match the variable count");
}

void MaskedMlp::set_mask(std::span<const std::uint8_t> mask) {
  check_mask(mask);
  if (mask[variable_] != 0)
    throw ParameterError("module " + std::to_string(variable_) + " may not read its own variable");
  mask_.assign(mask.begin(), mask.end());
}

void MaskedMlp::check_sample(std::span<const int> x) const {
  if (x.size() != n_) throw StructuralError("sample width does not match the variable count");
  for (int v : x)
    if (v < 0 || static_cast<std::size_t>(v) >= k_) throw StructuralError("category index out of range");
}

void MaskedMlp::hidden_pre(std::span<const int> x, std::span<const std::uint8_t> mask,
                           double* pre) const {
  const std::size_t h = hidden_;
  std::copy(params_.b1.begin(), params_.b1.end(), pre);
  for (std::size_t v = 0; v < n_; ++v) {
    if (!mask[v]) continue;
    const double* row = params_.w1.data() + (v * k_ + static_cast<std::size_t>(x[v])) * h;
    for (std::size_t j = 0; j < h; ++j) pre[j] += row[j];
  }
}

namespace {

inline double leaky(double z) { return z > 0.0 ? z : kLeakySlope * z; }

// Logits -> log-softmax in place, with max subtraction.
inline void log_softmax(double* logits, std::size_t k) {
  double m = logits[0];
  for (std::size_t c = 1; c < k; ++c) m = std::max(m, logits[c]);
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) sum += std::exp(logits[c] - m);
  const double lse = m + std::log(sum);
  for (std::size_t c = 0; c < k; ++c) logits[c] -= lse;
}

// -log softmax(logits)[y] without materialising the full distribution.
inline double nll_from_logits(const double* logits, std::size_t k, std::size_t y) {
  double m = logits[0];
  for (std::size_t c = 1; c < k; ++c) m = std::max(m, logits[c]);
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) sum += std::exp(logits[c] - m);
  return m + std::log(sum) - logits[y];
}

}  // namespace

void MaskedMlp::output_from_pre(const double* pre, double* act, double* logp) const {
  const std::size_t h = hidden_;
  const std::size_t k = k_;
  std::copy(params_.b2.begin(), params_.b2.end(), logp);
  for (std::size_t j = 0; j < h; ++j) {
    act[j] = leaky(pre[j]);
    const double a = act[j];
    const double* row = params_.w2.data() + j * k;
    for (std::size_t c = 0; c < k; ++c) logp[c] += a * row[c];
  }
  log_softmax(logp, k);
}

std::vector<double> MaskedMlp::forward(std::span<const int> x) const { return forward(x, mask_); }

std::vector<double> MaskedMlp::forward(std::span<const int> x, std::span<const std::uint8_t> mask) const {
  check_sample(x);
  check_mask(mask);
  std::vector<double> pre(hidden_), act(hidden_), logp(k_);
  hidden_pre(x, mask, pre.data());
  output_from_pre(pre.data(), act.data(), logp.data());
  return logp;
}

double MaskedMlp::nll(std::span<const int> x) const { return nll(x, mask_); }

double MaskedMlp::nll(std::span<const int> x, std::span<const std::uint8_t> mask) const {
  const auto logp = forward(x, mask);
  return -logp[static_cast<std::size_t>(x[variable_])];
}

double MaskedMlp::mean_nll(const SampleMatrix& batch) const { return mean_nll(batch, mask_); }

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

// Eigen peels unaligned heads with scalar code, so results would depend on
// where the allocator put a buffer. Scratch memory is therefore always
// allocated at Eigen's maximum alignment.
using Scratch = std::vector<double, Eigen::aligned_allocator<double>>;

// Rows are processed in fixed-size blocks so buffers stay cache resident
// and results do not depend on the total batch size.
constexpr std::size_t kBlockRows = 256;

}  // namespace

// Fills `pre` (rows x hidden) for rows [begin, begin + rows) and writes the
// log-softmax output to `logp` (rows x k). `act` receives the activations.
void MaskedMlp::forward_block(const SampleMatrix& batch, std::size_t begin, std::size_t rows,
                              std::span<const std::uint8_t> mask, double* pre, double* act,
                              double* logp) const {
  const std::size_t h = hidden_;
  const std::size_t k = k_;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto x = batch.row(begin + r);
    check_sample(x);
    hidden_pre(x, mask, pre + r * h);
  }
  for (std::size_t e = 0; e < rows * h; ++e) act[e] = leaky(pre[e]);
  const auto eh = static_cast<Eigen::Index>(h);
  const auto ek = static_cast<Eigen::Index>(k);
  const auto er = static_cast<Eigen::Index>(rows);
  RowMap out(logp, er, ek);
  out.noalias() = ConstRowMap(act, er, eh) * ConstRowMap(params_.w2.data(), eh, ek);
  out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(params_.b2.data(), ek);
  const Eigen::VectorXd top = out.rowwise().maxCoeff();
  out.colwise() -= top;
  const Eigen::VectorXd lse = out.array().exp().rowwise().sum().log().matrix();
  out.colwise() -= lse;
}

double MaskedMlp::mean_nll(const SampleMatrix& batch, std::span<const std::uint8_t> mask) const {
  if (batch.empty()) throw ParameterError("mean_nll: empty batch");
  check_mask(mask);
  const std::size_t block = std::min(kBlockRows, batch.rows());
  Scratch pre(block * hidden_), act(block * hidden_), logp(block * k_);
  double total = 0.0;
  for (std::size_t begin = 0; begin < batch.rows(); begin += block) {
    const std::size_t rows = std::min(block, batch.rows() - begin);
    forward_block(batch, begin, rows, mask, pre.data(), act.data(), logp.data());
    for (std::size_t r = 0; r < rows; ++r)
      total -= logp[r * k_ + static_cast<std::size_t>(batch(begin + r, variable_))];
  }
  return total / static_cast<double>(batch.rows());
}

BackwardResult MaskedMlp::backward(const SampleMatrix& batch) const { return backward(batch, mask_); }

BackwardResult MaskedMlp::backward(const SampleMatrix& batch, std::span<const std::uint8_t> mask) const {
  if (batch.empty()) throw ParameterError("backward: empty batch");
  check_mask(mask);
  const std::size_t h = hidden_;
  const std::size_t k = k_;
  BackwardResult out{Gradients(n_ * k_, h, k), 0.0};
  Gradients& g = out.grads;

  const std::size_t block = std::min(kBlockRows, batch.rows());
  Scratch pre(block * h), act(block * h), logp(block * k), dpre(block * h);
  std::vector<std::size_t> active;
  for (std::size_t v = 0; v < n_; ++v)
    if (mask[v]) active.push_back(v);

  const auto eh = static_cast<Eigen::Index>(h);
  const auto ek = static_cast<Eigen::Index>(k);
  RowMap gw2(g.w2.data(), eh, ek);
  const ConstRowMap w2(params_.w2.data(), eh, ek);

  double total = 0.0;
  for (std::size_t begin = 0; begin < batch.rows(); begin += block) {
    const std::size_t rows = std::min(block, batch.rows() - begin);
    const auto er = static_cast<Eigen::Index>(rows);
    forward_block(batch, begin, rows, mask, pre.data(), act.data(), logp.data());

    // logp becomes dNLL/dlogits = softmax - onehot.
    for (std::size_t r = 0; r < rows; ++r)
      total -= logp[r * k + static_cast<std::size_t>(batch(begin + r, variable_))];
    RowMap probs(logp.data(), er, ek);
    probs = probs.array().exp().matrix();
    for (std::size_t r = 0; r < rows; ++r) {
      double* l = logp.data() + r * k;
      l[static_cast<std::size_t>(batch(begin + r, variable_))] -= 1.0;
      for (std::size_t c = 0; c < k; ++c) g.b2[c] += l[c];
    }
    const ConstRowMap dlogit(logp.data(), er, ek);
    gw2.noalias() += ConstRowMap(act.data(), er, eh).transpose() * dlogit;
    RowMap dp(dpre.data(), er, eh);
    dp.noalias() = dlogit * w2.transpose();

    for (std::size_t r = 0; r < rows; ++r) {
      double* d = dpre.data() + r * h;
      const double* p = pre.data() + r * h;
      for (std::size_t j = 0; j < h; ++j) {
        d[j] *= p[j] > 0.0 ? 1.0 : kLeakySlope;
        g.b1[j] += d[j];
      }
      const auto x = batch.row(begin + r);
      for (std::size_t v : active) {
        double* g1row = g.w1.data() + (v * k + static_cast<std::size_t>(x[v])) * h;
        for (std::size_t j = 0; j < h; ++j) g1row[j] += d[j];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.rows());
  g *= inv;
  out.mean_nll = total * inv;
  return out;
}

void MaskedMlp::accumulate_edge_contrasts(const SampleMatrix& batch, std::span<const std::uint8_t> mask,
                                          std::span<double> contrast) const {
  check_mask(mask);
  if (contrast.size() != n_) throw StructuralError("contrast buffer has the wrong length");
  const std::size_t h = hidden_;
  const std::size_t k = k_;
  const std::size_t n = n_;
  // Row 0 is the mask as given, row 1 + v the mask with bit v flipped.
  Scratch pre((n + 1) * h), logits((n + 1) * k);
  const auto eh = static_cast<Eigen::Index>(h);
  const auto ek = static_cast<Eigen::Index>(k);
  const auto en = static_cast<Eigen::Index>(n + 1);
  const ConstRowMap w2(params_.w2.data(), eh, ek);

  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto x = batch.row(r);
    check_sample(x);
    const std::size_t y = static_cast<std::size_t>(x[variable_]);
    double* base = pre.data();
    hidden_pre(x, mask, base);
    for (std::size_t v = 0; v < n; ++v) {
      double* flipped = base + (v + 1) * h;
      const double* row = params_.w1.data() + (v * k + static_cast<std::size_t>(x[v])) * h;
      const double sign = mask[v] ? -1.0 : 1.0;
      for (std::size_t j = 0; j < h; ++j) flipped[j] = base[j] + sign * row[j];
    }
    for (double& e : pre) e = leaky(e);
    RowMap(logits.data(), en, ek).noalias() = ConstRowMap(pre.data(), en, eh) * w2;
    for (std::size_t q = 0; q <= n; ++q)
      for (std::size_t c = 0; c < k; ++c) logits[q * k + c] += params_.b2[c];
    const double base_nll = nll_from_logits(logits.data(), k, y);
    for (std::size_t v = 0; v < n; ++v) {
      if (v == variable_) continue;
      const double other = nll_from_logits(logits.data() + (v + 1) * k, k, y);
      contrast[v] += mask[v] ? base_nll - other : other - base_nll;
    }
  }
}

void init_glorot(MaskedMlp& mlp, Rng& rng) {
  auto fill = [&rng](std::vector<double>& w, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& x : w) x = dist(rng);
  };
  MlpParams& p = mlp.params();
  fill(p.w1, mlp.n() * mlp.k(), mlp.hidden());
  fill(p.w2, mlp.hidden(), mlp.k());
  std::fill(p.b1.begin(), p.b1.end(), 0.0);
  std::fill(p.b2.begin(), p.b2.end(), 0.0);
}

void Optimizer::step(MaskedMlp& mlp, const Gradients& grads, double scale) {
  if (scale == 0.0) return;
  MlpParams& theta = mlp.params();
  if (grads.w1.size() != theta.w1.size() || grads.b1.size() != theta.b1.size() ||
      grads.w2.size() != theta.w2.size() || grads.b2.size() != theta.b2.size())
    throw ParameterError("optimizer step: gradient shape does not match parameters");

  const double lr = scale * config_.lr;
  const double wd = config_.weight_decay;

  if (config_.kind == OptimizerConfig::Kind::sgd) {
    auto update = [&](std::vector<double>& p, const std::vector<double>& g) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (wd != 0.0) p[i] -= lr * wd * p[i];
        p[i] -= lr * g[i];
      }
    };
    update(theta.w1, grads.w1);
    update(theta.b1, grads.b1);
    update(theta.w2, grads.w2);
    update(theta.b2, grads.b2);
    ++steps_;
    return;
  }

  if (m_.size() != theta.size()) {
    m_ = MlpParams(mlp.n() * mlp.k(), mlp.hidden(), mlp.k());
    v_ = m_;
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double eps = config_.eps;

  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      if (wd != 0.0) p[i] -= lr * wd * p[i];
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  };
  update(theta.w1, grads.w1, m_.w1, v_.w1);
  update(theta.b1, grads.b1, m_.b1, v_.b1);
  update(theta.w2, grads.w2, m_.w2, v_.w2);
  update(theta.b2, grads.b2, m_.b2, v_.b2);
}

ModelStack::ModelStack(std::size_t n, std::size_t k, std::size_t hidden) : k_(k), hidden_(hidden) {
  modules_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) modules_.emplace_back(n, k, i, hidden);
}

ModelStack ModelStack::initialized(std::size_t n, std::size_t k, std::uint64_t seed, std::size_t hidden) {
  ModelStack stack(n, k, hidden);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {0x696e6974ULL, i}));
    init_glorot(stack.modules_[i], rng);
  }
  return stack;
}

void ModelStack::set_masks(const BinaryMatrix& masks) {
  if (masks.size() != n()) throw ParameterError("mask matrix dimension does not match the stack");
  for (std::size_t i = 0; i < n(); ++i) modules_[i].set_mask(masks.row(i));
}

BinaryMatrix ModelStack::masks() const {
  BinaryMatrix m(n());
  for (std::size_t i = 0; i < n(); ++i) {
    const auto row = modules_[i].mask();
    for (std::size_t j = 0; j < n(); ++j) m.set(i, j, row[j] != 0);
  }
  return m;
}

std::vector<double> ModelStack::per_variable_nll(const SampleMatrix& data) const {
  std::vector<double> out(n());
  for (std::size_t i = 0; i < n(); ++i) out[i] = modules_[i].mean_nll(data);
  return out;
}

}  // namespace causalshift
