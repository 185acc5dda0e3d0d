#include "zipfmax/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace zipfmax {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Weighted least squares of t ~ c + lambda * x with weights 1/t^2, i.e. on
// relative residuals. Falls back to a through-origin slope when the fitted
// intercept would be negative (overhead cannot be negative).
struct HingeFit {
  double c = 0.0;
  double lambda = 0.0;
  double total_sq_rel_residual = 0.0;
  bool ok = false;
};

HingeFit fit_candidate(const std::vector<TimingSample>& samples, int64_t k0, int64_t B0) {
  double sw = 0.0, swx = 0.0, swt = 0.0, swxx = 0.0, swxt = 0.0;
  for (const TimingSample& s : samples) {
    const double x = static_cast<double>(std::max(s.k, k0)) * static_cast<double>(B0);
    const double w = 1.0 / (s.seconds * s.seconds);
    sw += w;
    swx += w * x;
    swt += w * s.seconds;
    swxx += w * x * x;
    swxt += w * x * s.seconds;
  }
  const double det = sw * swxx - swx * swx;
  HingeFit fit;
  if (std::abs(det) < 1e-300) return fit;  // all x equal: hinge candidate degenerate
  fit.c = (swxx * swt - swx * swxt) / det;
  fit.lambda = (sw * swxt - swx * swt) / det;
  if (fit.c < 0.0) {
    fit.c = 0.0;
    fit.lambda = swxt / swxx;
  }
  if (!(fit.lambda > 0.0)) return fit;
  for (const TimingSample& s : samples) {
    const double x = static_cast<double>(std::max(s.k, k0)) * static_cast<double>(B0);
    const double r = (fit.c + fit.lambda * x - s.seconds) / s.seconds;
    fit.total_sq_rel_residual += r * r;
  }
  fit.ok = true;
  return fit;
}

}  // namespace

void CostModelParams::validate() const {
  if (c < 0.0) throw std::invalid_argument("cost model: c must be >= 0");
  if (!(lambda > 0.0)) throw std::invalid_argument("cost model: lambda must be > 0");
  if (k0 < 1) throw std::invalid_argument("cost model: k0 must be >= 1");
  if (B0 < 1) throw std::invalid_argument("cost model: B0 must be >= 1");
}

double g(const CostModelParams& params, int64_t k, double batch) {
  if (k < 1) throw std::invalid_argument("g: k must be >= 1");
  // batch may be fractional (expected batch p*B); zero is the degenerate
  // zero-probability-cluster corner, where the hinge floor applies.
  if (!(batch >= 0.0)) throw std::invalid_argument("g: batch must be >= 0");
  const double hinge = params.lambda * static_cast<double>(params.k0) *
                       static_cast<double>(params.B0);
  const double affine = params.lambda * static_cast<double>(k) * batch;
  return params.c + std::max(hinge, affine);
}

bool constraint_satisfied(const CostModelParams& params, int64_t k, double batch) {
  return static_cast<double>(k) * batch >=
         static_cast<double>(params.k0) * static_cast<double>(params.B0);
}

double predicted_speedup(const CostModelParams& params, int64_t baseline_k, double cost,
                         double batch) {
  if (!(cost > 0.0)) throw std::invalid_argument("predicted_speedup: cost must be > 0");
  return g(params, baseline_k, batch) / cost;
}

CalibrationResult calibrate_from_samples(const std::vector<TimingSample>& samples, int64_t B0) {
  if (B0 < 1) throw std::invalid_argument("calibrate: B0 must be >= 1");
  for (const TimingSample& s : samples) {
    if (!(s.seconds > 0.0)) throw std::invalid_argument("calibrate: non-positive sample time");
  }

  // Candidate hinges: distinct measured k leaving >= 2 samples on each side
  // (sides share the hinge point itself).
  std::set<int64_t> distinct;
  for (const TimingSample& s : samples) distinct.insert(s.k);
  std::vector<int64_t> candidates;
  for (const int64_t k0 : distinct) {
    int64_t below = 0, above = 0;
    for (const TimingSample& s : samples) {
      if (s.k <= k0) ++below;
      if (s.k >= k0) ++above;
    }
    if (below >= 2 && above >= 2) candidates.push_back(k0);
  }
  if (candidates.empty()) {
    throw std::runtime_error(
        "calibrate: degenerate fit, need at least two samples on each side of a hinge");
  }

  CostModelParams best;
  double best_residual = 0.0;
  bool have_best = false;
  for (const int64_t k0 : candidates) {
    const HingeFit fit = fit_candidate(samples, k0, B0);
    if (!fit.ok) continue;
    if (!have_best || fit.total_sq_rel_residual < best_residual) {
      best.c = fit.c;
      best.lambda = fit.lambda;
      best.k0 = k0;
      best.B0 = B0;
      best_residual = fit.total_sq_rel_residual;
      have_best = true;
    }
  }
  if (!have_best) throw std::runtime_error("calibrate: no hinge candidate produced a valid fit");
  best.validate();

  CalibrationResult result;
  result.params = best;
  result.report.total_sq_rel_residual = best_residual;
  std::vector<double> rel;
  for (const TimingSample& s : samples) {
    FitSample out;
    out.k = s.k;
    out.batch = static_cast<double>(s.batch);
    out.seconds = s.seconds;
    out.predicted = g(best, s.k, static_cast<double>(s.batch));
    out.rel_error = std::abs(out.predicted - s.seconds) / s.seconds;
    rel.push_back(out.rel_error);
    result.report.samples.push_back(out);
  }
  std::nth_element(rel.begin(), rel.begin() + rel.size() / 2, rel.end());
  result.report.median_rel_error = rel[rel.size() / 2];
  return result;
}

CalibrationResult calibrate(int64_t d, int64_t batch, const std::vector<int64_t>& k_grid,
                            int repeats, bool use_f32) {
  bool probes_low = false, probes_high = false;
  for (const int64_t k : k_grid) {
    probes_low = probes_low || k <= 64;
    probes_high = probes_high || k >= 2048;
  }
  if (!probes_low || !probes_high) {
    throw std::invalid_argument("calibrate: k_grid must include k <= 64 and k >= 2048");
  }

  std::vector<TimingSample> samples;
  samples.reserve(k_grid.size());
  for (const int64_t k : k_grid) {
    samples.push_back(use_f32 ? time_gemm<float>(d, k, batch, repeats)
                              : time_gemm<double>(d, k, batch, repeats));
  }
  return calibrate_from_samples(samples, batch);
}

void save_params(const CostModelParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_params: cannot open " + path);
  out << "c=" << format_double(params.c) << '\n'
      << "lambda=" << format_double(params.lambda) << '\n'
      << "k0=" << params.k0 << '\n'
      << "B0=" << params.B0 << '\n';
  if (!out) throw std::runtime_error("save_params: write failed for " + path);
}

CostModelParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_params: cannot open " + path);
  CostModelParams p;
  bool seen_c = false, seen_lambda = false, seen_k0 = false, seen_b0 = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("load_params: malformed line '" + line + "' in " + path);
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "c") {
      p.c = std::stod(value);
      seen_c = true;
    } else if (key == "lambda") {
      p.lambda = std::stod(value);
      seen_lambda = true;
    } else if (key == "k0") {
      p.k0 = std::stoll(value);
      seen_k0 = true;
    } else if (key == "B0") {
      p.B0 = std::stoll(value);
      seen_b0 = true;
    } else {
      throw std::runtime_error("load_params: unknown key '" + key + "' in " + path);
    }
  }
  if (!(seen_c && seen_lambda && seen_k0 && seen_b0)) {
    throw std::runtime_error("load_params: missing keys in " + path);
  }
  p.validate();
  return p;
}

void save_samples(const std::vector<TimingSample>& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_samples: cannot open " + path);
  out << "k,batch,seconds\n";
  for (const TimingSample& s : samples) {
    out << s.k << ',' << s.batch << ',' << format_double(s.seconds) << '\n';
  }
  if (!out) throw std::runtime_error("save_samples: write failed for " + path);
}

std::vector<TimingSample> load_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_samples: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "k,batch,seconds") {
    throw std::runtime_error("load_samples: expected header 'k,batch,seconds' in " + path);
  }
  std::vector<TimingSample> samples;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    TimingSample s;
    if (!std::getline(ss, field, ',')) break;
    s.k = std::stoll(field);
    if (!std::getline(ss, field, ',')) {
      throw std::runtime_error("load_samples: malformed row '" + line + "' in " + path);
    }
    s.batch = std::stoll(field);
    if (!std::getline(ss, field, ',')) {
      throw std::runtime_error("load_samples: malformed row '" + line + "' in " + path);
    }
    s.seconds = std::stod(field);
    samples.push_back(s);
  }
  return samples;
}

}  // namespace zipfmax
