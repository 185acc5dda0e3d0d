#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "zipfmax/matrix.hpp"

namespace zipfmax {

// Seeded generator with distribution code written out in full, so streams are
// identical across standard-library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(engine_() % span);
  }

  // Standard normal via Box-Muller, pairs cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <typename T>
void fill_uniform(Matrix<T>& m, Rng& rng, T lo, T hi) {
  for (size_t i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
  }
}

template <typename T>
void fill_normal(Matrix<T>& m, Rng& rng, T mean, T stddev) {
  for (size_t i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>(rng.normal(static_cast<double>(mean), static_cast<double>(stddev)));
  }
}

// Normalized probabilities p_i proportional to 1/(i+1)^exponent.
inline std::vector<double> zipf_probs(int64_t k, double exponent) {
  if (k < 1) throw std::invalid_argument("zipf_probs: k must be >= 1");
  std::vector<double> p(static_cast<size_t>(k));
  double total = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    p[static_cast<size_t>(i)] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
    total += p[static_cast<size_t>(i)];
  }
  for (double& v : p) v /= total;
  return p;
}

// Draws indices from a fixed discrete distribution by inverse CDF; identical
// output for identical seeds on every platform.
class DiscreteSampler {
 public:
  explicit DiscreteSampler(const std::vector<double>& probs) : cdf_(probs.size()) {
    if (probs.empty()) throw std::invalid_argument("DiscreteSampler: empty distribution");
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      cdf_[i] = acc;
    }
    cdf_.back() = 1.0;  // guard against rounding shortfall
  }

  int64_t sample(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<int64_t>(std::min<size_t>(static_cast<size_t>(it - cdf_.begin()),
                                                 cdf_.size() - 1));
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace zipfmax
