#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zipfmax/timing.hpp"

namespace zipfmax {

// Hinged matrix-product time model: flat below the k0*B0 work threshold,
// affine in k*B above it.
struct CostModelParams {
  double c = 0.0;        // fixed overhead, seconds
  double lambda = 0.0;   // seconds per output-times-batch unit
  int64_t k0 = 1;        // inflection column count
  int64_t B0 = 1;        // batch the hinge was measured at

  // Constant-regime time; recomputed so it can never drift from (c, lambda).
  double c_m() const { return c + lambda * static_cast<double>(k0) * static_cast<double>(B0); }

  void validate() const;  // c >= 0, lambda > 0, k0 >= 1, B0 >= 1
};

// g(k, B) = max(c + lambda*k0*B0, c + lambda*k*B). The effective batch may be
// fractional (expected batch p*B of a cluster); it must be positive.
double g(const CostModelParams& params, int64_t k, double batch);

// The product threshold under which a product wastes the constant regime.
bool constraint_satisfied(const CostModelParams& params, int64_t k, double batch);

// g(baseline_k, batch) / cost: how much faster `cost` is than a single
// full-width product.
double predicted_speedup(const CostModelParams& params, int64_t baseline_k, double cost,
                         double batch);

struct FitSample {
  int64_t k = 0;
  double batch = 0.0;
  double seconds = 0.0;     // measured
  double predicted = 0.0;   // model value at the fitted params
  double rel_error = 0.0;   // |predicted - seconds| / seconds
};

struct FitReport {
  std::vector<FitSample> samples;
  double median_rel_error = 0.0;
  double total_sq_rel_residual = 0.0;
};

struct CalibrationResult {
  CostModelParams params;
  FitReport report;
};

// Fits (c, lambda, k0) to measured samples taken at one batch size B0.
// Candidate hinges are drawn from the distinct measured k values that leave
// at least two samples on each side; for each candidate the model
// t = c + lambda * max(k0, k) * B0 is fitted by least squares on relative
// residuals (weights 1/t^2), c clamped at zero, and the candidate with the
// smallest total squared relative residual wins.
CalibrationResult calibrate_from_samples(const std::vector<TimingSample>& samples, int64_t B0);

// Times d x k products at the given batch over k_grid and fits the model.
// The grid must probe both regimes: at least one k <= 64 and one k >= 2048.
// use_f32 selects the 32-bit path timing runs use.
CalibrationResult calibrate(int64_t d, int64_t batch, const std::vector<int64_t>& k_grid,
                            int repeats, bool use_f32 = true);

// Params file: key=value lines `c=`, `lambda=`, `k0=`, `B0=`.
void save_params(const CostModelParams& params, const std::string& path);
CostModelParams load_params(const std::string& path);

// Sample CSV: header `k,batch,seconds`, one row per sample.
void save_samples(const std::vector<TimingSample>& samples, const std::string& path);
std::vector<TimingSample> load_samples(const std::string& path);

}  // namespace zipfmax
