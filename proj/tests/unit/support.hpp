#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "causalshift/nn.hpp"
#include "causalshift/rng.hpp"
#include "causalshift/scm.hpp"

namespace oracle {

using causalshift::MlpParams;

// Straight loops over the one-hot input, no blocking or masking tricks.
inline std::vector<double> mlp_logp(const MlpParams& p, std::size_t n, std::size_t k, std::size_t hidden,
                                    const std::vector<int>& x, const std::vector<std::uint8_t>& mask) {
  std::vector<double> h(hidden);
  for (std::size_t u = 0; u < hidden; ++u) {
    double s = p.b1[u];
    for (std::size_t v = 0; v < n; ++v) {
      if (!mask[v]) continue;
      for (std::size_t c = 0; c < k; ++c) {
        const double onehot = (x[v] == static_cast<int>(c)) ? 1.0 : 0.0;
        s += onehot * p.w1[(v * k + c) * hidden + u];
      }
    }
    h[u] = s > 0 ? s : 0.1 * s;
  }
  std::vector<double> z(k);
  for (std::size_t c = 0; c < k; ++c) {
    double s = p.b2[c];
    for (std::size_t u = 0; u < hidden; ++u) s += h[u] * p.w2[u * k + c];
    z[c] = s;
  }
  long double total = 0.0L;
  for (double zc : z) total += std::exp(static_cast<long double>(zc));
  const double lse = static_cast<double>(std::log(total));
  for (double& zc : z) zc -= lse;
  return z;
}

inline double mean_nll(const MlpParams& p, std::size_t n, std::size_t k, std::size_t hidden, std::size_t var,
                       const std::vector<std::vector<int>>& batch, const std::vector<std::uint8_t>& mask) {
  double s = 0.0;
  for (const auto& x : batch) s -= mlp_logp(p, n, k, hidden, x, mask)[static_cast<std::size_t>(x[var])];
  return s / static_cast<double>(batch.size());
}

// Exact joint distribution of an SCM by enumerating all k^n assignments and
// multiplying CPDs along the causal factorization. Intervened node (if any)
// gets a point mass at `value`.
inline std::map<std::vector<int>, double> exact_joint(const causalshift::GroundTruthScm& scm, int target = -1,
                                                      int value = 0) {
  const std::size_t n = scm.size();
  const std::size_t k = scm.k();
  std::map<std::vector<int>, double> joint;
  std::vector<int> x(n, 0);
  while (true) {
    double p = 1.0;
    for (std::size_t i = 0; i < n && p > 0.0; ++i) {
      if (static_cast<int>(i) == target) {
        p *= x[i] == value ? 1.0 : 0.0;
        continue;
      }
      const auto& mech = scm.mechanism(i);
      const auto& prm = mech.params();
      std::vector<std::uint8_t> mask(mech.mask().begin(), mech.mask().end());
      p *= std::exp(mlp_logp(prm, n, k, mech.hidden(), x, mask)[static_cast<std::size_t>(x[i])]);
    }
    if (p > 0.0) joint[x] = p;
    std::size_t d = 0;
    while (d < n && ++x[d] == static_cast<int>(k)) x[d++] = 0;
    if (d == n) break;
  }
  return joint;
}

// Hand-rolled seeded generator for property tests.
struct Gen {
  explicit Gen(std::uint64_t seed) : rng(seed) {}
  std::size_t size(std::size_t lo, std::size_t hi) { return lo + causalshift::uniform_index(rng, hi - lo + 1); }
  double real(double lo, double hi) { return lo + (hi - lo) * causalshift::uniform01(rng); }
  bool coin(double p = 0.5) { return causalshift::uniform01(rng) < p; }
  causalshift::Rng rng;
};

inline causalshift::SampleMatrix random_samples(Gen& g, std::size_t rows, std::size_t n, std::size_t k) {
  causalshift::SampleMatrix s(n);
  std::vector<int> x(n);
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto& v : x) v = static_cast<int>(g.size(0, k - 1));
    s.push_back(x);
  }
  return s;
}

inline std::vector<std::vector<int>> rows_of(const causalshift::SampleMatrix& s) {
  std::vector<std::vector<int>> out;
  for (std::size_t r = 0; r < s.rows(); ++r) out.emplace_back(s.row(r).begin(), s.row(r).end());
  return out;
}

}  // namespace oracle
