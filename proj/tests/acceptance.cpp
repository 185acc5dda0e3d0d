// Acceptance gate: ten numbered criteria, one per invocation, each printing a
// single PASS/FAIL line with its measured quantity against the tolerance
// pinned in its function. Exit status 0 on pass, 1 on fail, 2 on usage.
//
//   acceptance <criterion 1..10>
//
// The perplexity-parity criterion (9) trains on data/corpus.txt harvested by
// scripts/make_corpus.py; point ZIPFMAX_TEXT8 at a text8-format file to use
// real text8 instead.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "zipfmax/cost_model.hpp"
#include "zipfmax/fast_math.hpp"
#include "zipfmax/layers.hpp"
#include "zipfmax/lm.hpp"
#include "zipfmax/matrix.hpp"
#include "zipfmax/partition.hpp"
#include "zipfmax/rng.hpp"
#include "zipfmax/timing.hpp"
#include "zipfmax/trainer.hpp"
#include "zipfmax/vocab.hpp"

#ifndef ZIPFMAX_CORPUS_PATH
#define ZIPFMAX_CORPUS_PATH "data/corpus.txt"
#endif

namespace {

using zipfmax::AdaptiveSoftmax;
using zipfmax::CostModelParams;
using zipfmax::DiscreteSampler;
using zipfmax::DSoftmax;
using zipfmax::DSoftmaxVariant;
using zipfmax::FeedforwardLM;
using zipfmax::FullSoftmax;
using zipfmax::HsmFreq;
using zipfmax::make_partition;
using zipfmax::Matrix;
using zipfmax::Nonlinearity;
using zipfmax::OutputLayer;
using zipfmax::ParamView;
using zipfmax::Partition;
using zipfmax::Rng;
using zipfmax::Vocabulary;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ----------------------------------------------------------------- helpers

std::vector<int32_t> random_targets(Rng& rng, int64_t batch, int64_t k) {
  std::vector<int32_t> targets(static_cast<size_t>(batch));
  for (int32_t& t : targets) t = static_cast<int32_t>(rng.uniform_int(0, k - 1));
  return targets;
}

Matrix<double> random_hidden(Rng& rng, int64_t batch, int64_t d) {
  Matrix<double> h(batch, d);
  zipfmax::fill_uniform(h, rng, -1.5, 1.5);
  return h;
}

std::vector<Matrix<double>> grad_buffers(std::span<const ParamView<double>> params) {
  std::vector<Matrix<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.emplace_back(p.value->rows(), p.value->cols());
  return grads;
}

Vocabulary synthetic_vocabulary(const std::vector<double>& probs) {
  Vocabulary v;
  for (size_t i = 0; i < probs.size(); ++i) {
    v.words.push_back("w" + std::to_string(i));
    v.counts.push_back(std::llround(probs[i] * 1e8) + 1);
  }
  v.probs = probs;
  v.unk_index = static_cast<int64_t>(probs.size()) - 1;
  return v;
}

// A valid random partition: random head, tail sizes sorted ascending,
// capacities non-increasing and bounded by the hidden dimension.
Partition random_partition(Rng& rng, const std::vector<double>& probs, int64_t j, int64_t d) {
  const auto k = static_cast<int64_t>(probs.size());
  const int64_t k_h = rng.uniform_int(1, k / 2);
  int64_t remaining = k - k_h;
  std::vector<int64_t> sizes;
  for (int64_t i = 0; i < j; ++i) {
    const int64_t left = j - i - 1;
    const int64_t take = (i + 1 == j) ? remaining : rng.uniform_int(1, remaining - left);
    sizes.push_back(take);
    remaining -= take;
  }
  std::sort(sizes.begin(), sizes.end());
  std::vector<int64_t> dims;
  int64_t cap = std::max<int64_t>(2, d / 2);
  for (int64_t i = 0; i < j; ++i) {
    dims.push_back(cap);
    cap = std::max<int64_t>(2, cap / 2);
  }
  return make_partition(probs, k_h, std::move(sizes), std::move(dims));
}

// Local calibration at language-model shape, shared by the planning and
// speedup criteria. Modest repeats: the fit needs the shape, not 1% timing.
CostModelParams quick_local_params(int64_t d, int64_t batch) {
  const std::vector<int64_t> grid = {8,    16,   32,   64,    128,   256,  512,
                                     1024, 2048, 4096, 8192, 16384, 32768, 65536};
  return zipfmax::calibrate(d, batch, grid, 3).params;
}

const zipfmax::SweepEntry& best_entry(const std::vector<zipfmax::SweepEntry>& entries) {
  const zipfmax::SweepEntry* best = &entries.front();
  for (const zipfmax::SweepEntry& e : entries) {
    if (e.cost < best->cost) best = &e;
  }
  return *best;
}

// ------------------------------------------------- criterion 1: exactness

// Adaptive softmax with no tail clusters must BE the full softmax: same
// log-probabilities and same gradients, down to floating-point identity
// territory, across random shapes.
Outcome criterion_1() {
  constexpr double kTol = 1e-12;
  constexpr int kInstances = 100;
  Rng rng(101);
  double worst = 0.0;

  for (int inst = 0; inst < kInstances; ++inst) {
    const int64_t d = rng.uniform_int(2, 32);
    const int64_t k = rng.uniform_int(5, 200);
    const int64_t batch = rng.uniform_int(1, 8);
    const auto probs = zipfmax::zipf_probs(k, 1.0);

    FullSoftmax<double> full(d, k, rng);
    AdaptiveSoftmax<double> adaptive(d, make_partition(probs, k, {}), rng);
    // Same parameters on both sides.
    auto fp = full.parameters();
    auto ap = adaptive.parameters();
    for (size_t i = 0; i < fp.size(); ++i) *ap[i].value = *fp[i].value;

    const Matrix<double> hidden = random_hidden(rng, batch, d);
    const std::vector<int32_t> targets = random_targets(rng, batch, k);

    const Matrix<double> lp_full = full.log_distribution(hidden);
    const Matrix<double> lp_adaptive = adaptive.log_distribution(hidden);
    for (int64_t r = 0; r < batch; ++r) {
      for (int64_t c = 0; c < k; ++c) {
        worst = std::max(worst, std::abs(lp_full(r, c) - lp_adaptive(r, c)));
      }
    }

    auto gf = grad_buffers(fp);
    auto ga = grad_buffers(ap);
    Matrix<double> hf(batch, d), ha(batch, d);
    const double lf = full.forward_backward(hidden, targets, gf, &hf, 1.0);
    const double la = adaptive.forward_backward(hidden, targets, ga, &ha, 1.0);
    worst = std::max(worst, std::abs(lf - la));
    for (size_t i = 0; i < gf.size(); ++i) {
      for (int64_t r = 0; r < gf[i].rows(); ++r) {
        for (int64_t c = 0; c < gf[i].cols(); ++c) {
          worst = std::max(worst, std::abs(gf[i](r, c) - ga[i](r, c)));
        }
      }
    }
    for (int64_t r = 0; r < batch; ++r) {
      for (int64_t c = 0; c < d; ++c) {
        worst = std::max(worst, std::abs(hf(r, c) - ha(r, c)));
      }
    }
  }

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "no-tail layer vs full softmax: max |diff| %.3g over %d instances (tol %g)", worst,
                kInstances, kTol);
  return {worst < kTol, buf};
}

// --------------------------------------------- criterion 2: normalization

Outcome criterion_2() {
  constexpr double kTol = 1e-9;
  constexpr int kDraws = 100;
  Rng rng(202);
  double worst = 0.0;
  std::string worst_layer = "none";

  const auto check = [&](OutputLayer<double>& layer, const std::string& name, int64_t d,
                         int64_t k) {
    const Matrix<double> hidden = random_hidden(rng, 3, d);
    const Matrix<double> lp = layer.log_distribution(hidden);
    for (int64_t r = 0; r < lp.rows(); ++r) {
      double total = 0.0;
      for (int64_t c = 0; c < k; ++c) total += std::exp(lp(r, c));
      const double err = std::abs(total - 1.0);
      if (err > worst) {
        worst = err;
        worst_layer = name;
      }
    }
  };

  for (int draw = 0; draw < kDraws; ++draw) {
    const int64_t d = rng.uniform_int(8, 32);
    const int64_t k = rng.uniform_int(50, 200);
    const auto probs = zipfmax::zipf_probs(k, 1.0);
    const Vocabulary vocab = synthetic_vocabulary(probs);

    FullSoftmax<double> full(d, k, rng);
    check(full, "full", d, k);
    for (int64_t j = 1; j <= 3; ++j) {
      AdaptiveSoftmax<double> adaptive(d, random_partition(rng, probs, j, d), rng);
      check(adaptive, "adaptive J=" + std::to_string(j), d, k);
    }
    HsmFreq<double> hsm(d, vocab.counts, rng);
    check(hsm, "hsm", d, k);
    DSoftmax<double> sliced(d, random_partition(rng, probs, 2, d / 2), DSoftmaxVariant::sliced,
                            rng);
    check(sliced, "dsoftmax", d, k);
    DSoftmax<double> projected(d, random_partition(rng, probs, 2, d), DSoftmaxVariant::projected,
                               rng);
    check(projected, "dsoftmax-star", d, k);
  }

  char buf[160];
  std::snprintf(buf, sizeof(buf), "worst |sum p - 1| %.3g (%s) over %d draws x 6 layers (tol %g)",
                worst, worst_layer.c_str(), kDraws, kTol);
  return {worst < kTol, buf};
}

// ------------------------------------------------ criterion 3: gradients

// Central finite differences over every parameter group of every layer and
// both language-model harnesses at the pinned shape d=8, k=50, J=2, B=4,
// unroll=2.
Outcome criterion_3() {
  constexpr double kTol = 1e-5;
  constexpr double kEps = 1e-5;
  // Central differences on a loss of magnitude ~ln(k) carry cancellation
  // noise of about ulp(loss)/eps ~ 5e-11 in each fd value, so coordinates
  // below this floor measure roundoff, not the backward pass.
  constexpr double kDenomFloor = 1e-4;
  constexpr int64_t d = 8, k = 50, batch = 4;
  Rng rng(303);
  const auto probs = zipfmax::zipf_probs(k, 1.0);
  const Vocabulary vocab = synthetic_vocabulary(probs);
  const Partition part = make_partition(probs, 30, {8, 12}, {4, 2});

  double worst = 0.0;
  std::string worst_site = "none";
  const auto note = [&](const std::string& name, const oracle::FdResult& r) {
    if (r.max_rel > worst) {
      worst = r.max_rel;
      worst_site = name + " " + r.worst;
    }
  };

  const auto check_layer = [&](OutputLayer<double>& layer, const std::string& name) {
    const Matrix<double> hidden = random_hidden(rng, batch, d);
    const std::vector<int32_t> targets = random_targets(rng, batch, k);
    auto params = layer.parameters();
    auto grads = grad_buffers(params);
    Matrix<double> hidden_grad(batch, d);
    layer.forward_backward(hidden, targets, grads, &hidden_grad);
    note(name, oracle::fd_gradient_check<double>(
                   params, grads, [&] { return layer.loss(hidden, targets); }, kEps, kDenomFloor));
    // The gradient with respect to the hidden input, through the same oracle.
    Matrix<double> hidden_copy = hidden;
    std::vector<ParamView<double>> hview{{"hidden", &hidden_copy}};
    std::vector<Matrix<double>> hgrad;
    hgrad.push_back(hidden_grad);
    note(name + " input", oracle::fd_gradient_check<double>(
                              hview, hgrad, [&] { return layer.loss(hidden_copy, targets); },
                              kEps, kDenomFloor));
  };

  FullSoftmax<double> full(d, k, rng);
  check_layer(full, "full");
  AdaptiveSoftmax<double> adaptive(d, part, rng);
  check_layer(adaptive, "adaptive");
  HsmFreq<double> hsm(d, vocab.counts, rng);
  check_layer(hsm, "hsm");
  DSoftmax<double> sliced(d, part, DSoftmaxVariant::sliced, rng);
  check_layer(sliced, "dsoftmax");
  DSoftmax<double> projected(d, part, DSoftmaxVariant::projected, rng);
  check_layer(projected, "dsoftmax-star");

  // Feedforward harness: gradients of the mean window loss.
  {
    auto output = std::make_unique<AdaptiveSoftmax<double>>(d, part, rng);
    FeedforwardLM<double> model(k, 6, d, 2, Nonlinearity::sigmoid, std::move(output), rng);
    Matrix<int32_t> window(batch, 3);
    for (int64_t r = 0; r < batch; ++r) {
      for (int64_t c = 0; c < 3; ++c) {
        window(r, c) = static_cast<int32_t>(rng.uniform_int(0, k - 1));
      }
    }
    auto params = model.parameters();
    auto grads = grad_buffers(params);
    model.train_step(window, grads);
    auto scratch = grad_buffers(params);
    note("feedforward", oracle::fd_gradient_check<double>(
                            params, grads,
                            [&] {
                              for (auto& g : scratch) g.set_zero();
                              return model.train_step(window, scratch);
                            },
                            kEps, kDenomFloor));
  }

  // Recurrent harness at unroll=2: state is reset before every evaluation so
  // the objective is a pure function of the parameters.
  {
    auto output = std::make_unique<FullSoftmax<double>>(d, k, rng);
    zipfmax::ElmanRNN<double> model(k, 6, d, 2, Nonlinearity::tanh, std::move(output), rng);
    Matrix<int32_t> window(batch, 3);
    for (int64_t r = 0; r < batch; ++r) {
      for (int64_t c = 0; c < 3; ++c) {
        window(r, c) = static_cast<int32_t>(rng.uniform_int(0, k - 1));
      }
    }
    auto params = model.parameters();
    auto grads = grad_buffers(params);
    model.reset_state(batch);
    model.train_step(window, grads);
    auto scratch = grad_buffers(params);
    note("elman", oracle::fd_gradient_check<double>(
                      params, grads,
                      [&] {
                        for (auto& g : scratch) g.set_zero();
                        model.reset_state(batch);
                        return model.train_step(window, scratch);
                      },
                      kEps, kDenomFloor));
  }

  char buf[200];
  std::snprintf(buf, sizeof(buf), "worst relative error %.3g at %s (tol %g, eps %g)", worst,
                worst_site.c_str(), kTol, kEps);
  return {worst < kTol, buf};
}

// -------------------------------------------- criterion 4: DP optimality

// Exhaustive enumeration over every boundary tuple, evaluating each
// candidate with the library cost function in the same accumulation order.
struct BruteBest {
  double cost = std::numeric_limits<double>::infinity();
  int64_t k_h = 0;
  std::vector<int64_t> tail_sizes;
};

void enumerate_boundaries(const std::vector<double>& prefix, const CostModelParams& params,
                          double batch, int64_t k_h, int64_t start, int64_t remaining,
                          int64_t k, double acc, std::vector<int64_t>& sizes, BruteBest& best) {
  if (remaining == 1) {
    const double mass = prefix[static_cast<size_t>(k)] - prefix[static_cast<size_t>(start)];
    const double total = acc + zipfmax::g(params, k - start, mass * batch);
    if (total < best.cost) {
      best.cost = total;
      best.k_h = k_h;
      best.tail_sizes = sizes;
      best.tail_sizes.push_back(k - start);
    }
    return;
  }
  for (int64_t end = start + 1; end <= k - remaining + 1; ++end) {
    const double mass = prefix[static_cast<size_t>(end)] - prefix[static_cast<size_t>(start)];
    sizes.push_back(end - start);
    enumerate_boundaries(prefix, params, batch, k_h, end, remaining - 1, k,
                         acc + zipfmax::g(params, end - start, mass * batch), sizes, best);
    sizes.pop_back();
  }
}

BruteBest brute_force_partition(const std::vector<double>& probs, int64_t j,
                                const CostModelParams& params, double batch) {
  const auto k = static_cast<int64_t>(probs.size());
  std::vector<double> prefix(probs.size() + 1, 0.0);
  for (size_t i = 0; i < probs.size(); ++i) prefix[i + 1] = prefix[i] + probs[i];
  BruteBest best;
  std::vector<int64_t> sizes;
  for (int64_t k_h = 1; k_h <= k - j; ++k_h) {
    sizes.clear();
    enumerate_boundaries(prefix, params, batch, k_h, k_h, j, k,
                         zipfmax::g(params, j + k_h, batch), sizes, best);
  }
  return best;
}

Outcome criterion_4() {
  constexpr int kDraws = 50;
  constexpr double kSwapTol = 1e-12;  // relative slack for exact ties
  Rng rng(404);
  int64_t compared = 0;
  double worst_swap_gain = 0.0;

  for (int draw = 0; draw < kDraws; ++draw) {
    const int64_t k = rng.uniform_int(20, 200);
    const double exponent = rng.uniform(0.5, 2.0);
    const auto probs = zipfmax::zipf_probs(k, exponent);
    CostModelParams params;
    params.c = 1e-5 * rng.uniform(0.5, 1.5);
    params.lambda = 1e-9 * rng.uniform(0.5, 1.5);
    params.k0 = rng.uniform_int(1, 64);
    params.B0 = 128;
    const double batch = 128.0;

    for (int64_t j = 1; j <= 3; ++j) {
      if (k - j < 1) continue;
      const zipfmax::OptimizeResult dp = zipfmax::optimize_fixed_j(probs, j, params, batch);
      const BruteBest brute = brute_force_partition(probs, j, params, batch);
      if (dp.cost != brute.cost) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "draw %d J=%" PRId64 " k=%" PRId64 ": DP cost %.17g != brute %.17g", draw, j,
                      k, dp.cost, brute.cost);
        return {false, buf};
      }
      ++compared;

      // Exchange property at the optimum: moving one word between any two
      // clusters (head included) never lowers the affine cost. Cluster
      // masses are updated exactly; the affine total is recomputed in full.
      const Partition& part = dp.partition;
      const auto starts = zipfmax::cluster_starts(part);
      std::vector<double> masses(static_cast<size_t>(j));
      std::vector<int64_t> sizes(static_cast<size_t>(j));
      for (int64_t c = 0; c < j; ++c) {
        sizes[static_cast<size_t>(c)] = part.tail_sizes[static_cast<size_t>(c)];
        double m = 0.0;
        for (int64_t w = starts[static_cast<size_t>(c + 1)]; w < starts[static_cast<size_t>(c + 2)];
             ++w) {
          m += probs[static_cast<size_t>(w)];
        }
        masses[static_cast<size_t>(c)] = m;
      }
      const auto affine_total = [&](const std::vector<double>& m) {
        double total = static_cast<double>(j + 1) * params.c +
                       params.lambda * batch * static_cast<double>(j + part.k_h);
        for (int64_t c = 0; c < j; ++c) {
          total += params.lambda * batch * m[static_cast<size_t>(c)] *
                   static_cast<double>(sizes[static_cast<size_t>(c)]);
        }
        return total;
      };
      const double base = affine_total(masses);

      // Tail-tail swaps: exchange one word of cluster a with one of cluster b.
      for (int64_t a = 0; a < j; ++a) {
        for (int64_t b = a + 1; b < j; ++b) {
          for (int64_t wa = starts[static_cast<size_t>(a + 1)];
               wa < starts[static_cast<size_t>(a + 2)]; ++wa) {
            for (int64_t wb = starts[static_cast<size_t>(b + 1)];
                 wb < starts[static_cast<size_t>(b + 2)]; ++wb) {
              std::vector<double> m = masses;
              const double delta = probs[static_cast<size_t>(wb)] - probs[static_cast<size_t>(wa)];
              m[static_cast<size_t>(a)] += delta;
              m[static_cast<size_t>(b)] -= delta;
              worst_swap_gain = std::max(worst_swap_gain, (base - affine_total(m)) / base);
            }
          }
        }
      }
      // Head-tail swaps: head words carry no mass term, so only the tail
      // cluster's mass changes.
      for (int64_t b = 0; b < j; ++b) {
        for (int64_t wh = 0; wh < part.k_h; ++wh) {
          for (int64_t wb = starts[static_cast<size_t>(b + 1)];
               wb < starts[static_cast<size_t>(b + 2)]; ++wb) {
            std::vector<double> m = masses;
            m[static_cast<size_t>(b)] +=
                probs[static_cast<size_t>(wh)] - probs[static_cast<size_t>(wb)];
            worst_swap_gain = std::max(worst_swap_gain, (base - affine_total(m)) / base);
          }
        }
      }
    }
  }

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "DP == exhaustive on %" PRId64
                " optima; best single-swap improvement %.3g of cost (tol %g)",
                compared, worst_swap_gain, kSwapTol);
  return {worst_swap_gain <= kSwapTol, buf};
}

// ----------------------------------------- criterion 5: calibration fit

Outcome criterion_5() {
  constexpr double kRoundTripTol = 1e-9;  // relative, noiseless synthetic
  constexpr double kMedianTol = 0.20;     // median relative error, measured
  // Synthetic round trip.
  CostModelParams gen;
  gen.c = 3.7e-4;
  gen.lambda = 2.9e-9;
  gen.k0 = 724;
  gen.B0 = 128;
  std::vector<zipfmax::TimingSample> samples;
  for (const int64_t k : {8LL, 16LL, 32LL, 64LL, 128LL, 256LL, 512LL, 724LL, 1024LL, 2048LL,
                          4096LL, 8192LL, 16384LL, 32768LL, 65536LL}) {
    samples.push_back({k, gen.B0, zipfmax::g(gen, k, static_cast<double>(gen.B0)), 1});
  }
  const CostModelParams fit = zipfmax::calibrate_from_samples(samples, gen.B0).params;
  const double rt_err = std::max(
      {std::abs(fit.c - gen.c) / gen.c, std::abs(fit.lambda - gen.lambda) / gen.lambda,
       std::abs(static_cast<double>(fit.k0 - gen.k0)) / static_cast<double>(gen.k0)});
  if (rt_err > kRoundTripTol) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "synthetic round trip error %.3g exceeds %g", rt_err,
                  kRoundTripTol);
    return {false, buf};
  }

  // Measured fit at the paper-scale shape.
  const std::vector<int64_t> grid = {8,    16,   32,   64,    128,   256,  512,
                                     1024, 2048, 4096, 8192, 16384, 32768, 65536};
  const zipfmax::CalibrationResult real = zipfmax::calibrate(2048, 128, grid, 5);
  real.params.validate();

  // Shape probe: constant then affine. The fitted inflection must leave a
  // non-trivial constant regime (at least the two smallest grid widths,
  // within 2x of each other), and measured time must grow at least
  // eightfold across the top 32x of k.
  double flat_lo = std::numeric_limits<double>::infinity();
  double flat_hi = 0.0;
  int64_t flat_count = 0;
  double t2048 = 0, t65536 = 0;
  for (const zipfmax::FitSample& s : real.report.samples) {
    if (s.k <= real.params.k0) {
      flat_lo = std::min(flat_lo, s.seconds);
      flat_hi = std::max(flat_hi, s.seconds);
      ++flat_count;
    }
    if (s.k == 2048) t2048 = s.seconds;
    if (s.k == 65536) t65536 = s.seconds;
  }
  const double flat_ratio = flat_hi / flat_lo;
  const double growth_ratio = t65536 / t2048;
  const bool shape_ok = flat_count >= 2 && flat_ratio < 2.0 && growth_ratio > 8.0;

  char buf[280];
  std::snprintf(buf, sizeof(buf),
                "round trip %.2g; median rel err %.3f (tol %.2f); constant regime k<=%" PRId64
                " spans %" PRId64 " widths within %.2fx (<2), t(65536)/t(2048)=%.1f (>8)",
                rt_err, real.report.median_rel_error, kMedianTol, real.params.k0, flat_count,
                flat_ratio, growth_ratio);
  return {real.report.median_rel_error <= kMedianTol && shape_ok, buf};
}

// ------------------------------------- criterion 6: two-cluster planning

Outcome criterion_6() {
  constexpr double kMinSpeedup = 2.0;
  constexpr int64_t k = 50000;
  const CostModelParams params = quick_local_params(128, 128);
  const auto probs = zipfmax::zipf_probs(k, 1.0);
  const double batch = 128.0;

  const zipfmax::TwoClusterCurve curve = zipfmax::two_cluster_curve(probs, params, batch, 16);
  const zipfmax::TwoClusterPoint* best = &curve.points.front();
  for (const auto& p : curve.points) {
    if (p.cost < best->cost) best = &p;
  }
  double equal_split_cost = 0.0;
  int64_t closest = std::numeric_limits<int64_t>::max();
  for (const auto& p : curve.points) {
    const int64_t gap = std::llabs(p.k_h - curve.equal_split_k_h);
    if (gap < closest) {
      closest = gap;
      equal_split_cost = p.cost;
    }
  }
  const double speedup = zipfmax::predicted_speedup(params, k, best->cost, batch);
  const bool not_equal_split = best->k_h != curve.equal_split_k_h && best->cost < equal_split_cost;

  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "optimal k_h=%" PRId64 " predicted speedup %.2fx (need > %.1f); equal-p split at "
                "k_h=%" PRId64 " costs %.3g vs optimum %.3g",
                best->k_h, speedup, kMinSpeedup, curve.equal_split_k_h, equal_split_cost,
                best->cost);
  return {speedup > kMinSpeedup && not_equal_split, buf};
}

// ------------------------------------ criterion 7: cluster-count curve

Outcome criterion_7() {
  constexpr double kOverheadSlack = 1e-12;  // J -> J+1 may pay at most c
  constexpr double kLateGain = 0.05;        // beyond J=5: < 5% of the J=5 cost
  constexpr int64_t k = 50000;
  const CostModelParams params = quick_local_params(128, 128);
  const auto probs = zipfmax::zipf_probs(k, 1.0);

  const std::vector<zipfmax::SweepEntry> entries =
      zipfmax::sweep_clusters(probs, 10, params, 128.0, 16);
  for (size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].cost > entries[i - 1].cost + params.c + kOverheadSlack) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "cost rose by more than the overhead c at J=%" PRId64,
                    entries[i].J);
      return {false, buf};
    }
  }
  const double cost5 = entries[4].cost;
  double best_late = cost5;
  for (size_t i = 5; i < entries.size(); ++i) best_late = std::min(best_late, entries[i].cost);
  const double late_gain = (cost5 - best_late) / cost5;

  char buf[320];
  if (late_gain < kLateGain) {
    std::snprintf(buf, sizeof(buf),
                  "cost non-increasing up to overhead; gain beyond J=5 is %.4f of the J=5 cost "
                  "(tol %.2f)",
                  late_gain, kLateGain);
  } else {
    // The J=5 plateau requires a large fixed per-product overhead; report
    // the locally fitted overhead so the number can be judged.
    std::snprintf(buf, sizeof(buf),
                  "cost non-increasing up to overhead, but gain beyond J=5 is %.4f of the J=5 "
                  "cost (tol %.2f): locally fitted overhead c=%.3g s (constant-regime floor "
                  "%.3g s) is too small to make extra clusters unprofitable by J=5",
                  late_gain, kLateGain, params.c, params.c_m());
  }
  return {late_gain < kLateGain, buf};
}

// -------------------------------------- criterion 8: measured speedup

Outcome criterion_8() {
  constexpr double kMinSpeedup = 2.0;
  constexpr int64_t d = 128, batch = 64;
  constexpr int kRepeats = 9;
  const CostModelParams params = quick_local_params(d, batch);

  const auto measured_ratio = [&](int64_t k) {
    const auto probs = zipfmax::zipf_probs(k, 1.0);
    const Vocabulary vocab = synthetic_vocabulary(probs);
    Partition part =
        best_entry(zipfmax::sweep_clusters(probs, 10, params, static_cast<double>(batch), 16))
            .partition;
    part.cluster_dims = zipfmax::assign_capacities(part.num_tail_clusters(), d);
    Rng rng(808);
    auto full = zipfmax::make_output_layer<float>("full", d, vocab, nullptr, rng);
    auto adaptive = zipfmax::make_output_layer<float>("adaptive", d, vocab, &part, rng);
    const double t_full = zipfmax::measure_layer_time(*full, probs, batch, kRepeats, 808);
    const double t_adaptive = zipfmax::measure_layer_time(*adaptive, probs, batch, kRepeats, 808);
    return t_full / t_adaptive;
  };

  const double ratio_50k = measured_ratio(50000);
  const double ratio_1k = measured_ratio(1000);

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "fused-step speedup at k=50000: %.2fx (need >= %.1f); at k=1000: %.2fx (recorded)",
                ratio_50k, kMinSpeedup, ratio_1k);
  return {ratio_50k >= kMinSpeedup, buf};
}

// -------------------------------- criterion 9: perplexity parity at desk scale

Outcome criterion_9() {
  constexpr double kParityTol = 0.05;  // adaptive within 5% of full
  constexpr int64_t kTrainTokens = 2000000;
  constexpr int64_t kValidTokens = 200000;
  constexpr int64_t d = 128, emb = 64, window = 5;

  const char* override_path = std::getenv("ZIPFMAX_TEXT8");
  const std::string corpus_path = override_path != nullptr ? override_path : ZIPFMAX_CORPUS_PATH;
  const std::string text = zipfmax::read_text_file(corpus_path);

  const Vocabulary vocab = zipfmax::build_vocabulary(text, 10000, 1, false);
  zipfmax::TokenStream all = zipfmax::encode(text, vocab);
  if (static_cast<int64_t>(all.size()) < kTrainTokens + kValidTokens) {
    return {false, "corpus " + corpus_path + " has fewer than 2.2M tokens"};
  }
  const std::span<const int32_t> train_tokens(all.data(), kTrainTokens);
  const std::span<const int32_t> valid_tokens(all.data() + kTrainTokens, kValidTokens);

  zipfmax::TrainConfig tc;  // step 0.1, clip 1, 5 epochs, batch 128
  tc.save_checkpoints = false;

  const auto run = [&](const std::string& kind, const Partition* part) {
    Rng rng(909);
    auto output = zipfmax::make_output_layer<float>(kind, d, vocab, part, rng);
    FeedforwardLM<float> model(vocab.size(), emb, d, window, Nonlinearity::sigmoid,
                               std::move(output), rng);
    const auto logs = zipfmax::train(model, vocab, train_tokens, valid_tokens, tc);
    std::printf("  %-8s ppl %.3f  (%.0fs)\n", kind.c_str(), logs.back().ppl_valid,
                logs.back().seconds);
    std::fflush(stdout);
    return std::make_pair(logs.back().ppl_valid, logs.back().seconds);
  };

  const CostModelParams params = quick_local_params(d, 128);
  Partition part = best_entry(zipfmax::sweep_clusters(vocab.probs, 10, params, 128.0, 16)).partition;
  part.cluster_dims = zipfmax::assign_capacities(part.num_tail_clusters(), d);

  const auto [ppl_full, sec_full] = run("full", nullptr);
  const auto [ppl_adaptive, sec_adaptive] = run("adaptive", &part);
  const auto [ppl_hsm, sec_hsm] = run("hsm", nullptr);

  const double gap = std::abs(ppl_adaptive - ppl_full) / ppl_full;
  const bool ordering = ppl_hsm > ppl_adaptive;

  char buf[280];
  std::snprintf(buf, sizeof(buf),
                "full %.2f, adaptive %.2f (gap %.3f, tol %.2f), hsm %.2f (%s adaptive); "
                "train wall time full %.0fs, adaptive %.0fs, hsm %.0fs",
                ppl_full, ppl_adaptive, gap, kParityTol, ppl_hsm,
                ordering ? "worse than" : "NOT worse than", sec_full, sec_adaptive, sec_hsm);
  return {gap <= kParityTol && ordering, buf};
}

// ------------------------------- criterion 10: synthetic entropy bound

Outcome criterion_10() {
  constexpr double kSlack = 0.20;  // within 20% of the entropy-rate bound
  constexpr int64_t k = 12;
  // Doubly stochastic transition matrix: 0.6 to the next state, the rest
  // uniform, so the stationary distribution is uniform and the entropy rate
  // is one row's entropy.
  std::vector<std::vector<double>> transition(k, std::vector<double>(k, 0.4 / (k - 1)));
  for (int64_t s = 0; s < k; ++s) {
    transition[static_cast<size_t>(s)][static_cast<size_t>((s + 1) % k)] = 0.6;
  }
  double entropy = 0.0;
  for (const double p : transition[0]) entropy -= p * std::log(p);
  const double bound = std::exp(entropy);

  Rng rng(1010);
  std::vector<DiscreteSampler> samplers;
  for (const auto& row : transition) samplers.emplace_back(row);
  const auto draw_stream = [&](int64_t n) {
    zipfmax::TokenStream stream{0};
    for (int64_t i = 1; i < n; ++i) {
      stream.push_back(
          static_cast<int32_t>(samplers[static_cast<size_t>(stream.back())].sample(rng)));
    }
    return stream;
  };
  const zipfmax::TokenStream train_tokens = draw_stream(60000);
  const zipfmax::TokenStream valid_tokens = draw_stream(8000);

  Vocabulary vocab;
  for (int64_t i = 0; i < k; ++i) {
    vocab.words.push_back("s" + std::to_string(i));
    vocab.counts.push_back(1000);
    vocab.probs.push_back(1.0 / static_cast<double>(k));
  }
  vocab.unk_index = k - 1;

  auto output = std::make_unique<FullSoftmax<double>>(32, k, rng);
  FeedforwardLM<double> model(k, 16, 32, 1, Nonlinearity::sigmoid, std::move(output), rng);
  zipfmax::TrainConfig tc;
  tc.batch = 32;
  tc.save_checkpoints = false;
  const auto logs = zipfmax::train(model, vocab, train_tokens, valid_tokens, tc);
  const double ppl = logs.back().ppl_valid;

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "trained ppl %.4f vs entropy-rate bound %.4f (ratio %.3f, tol within %.2f)", ppl,
                bound, ppl / bound, kSlack);
  return {ppl <= bound * (1.0 + kSlack) && ppl >= bound * (1.0 - kSlack), buf};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <criterion 1..10>\n");
    return 2;
  }
  const int n = std::atoi(argv[1]);
  Outcome outcome;
  switch (n) {
    case 1: outcome = criterion_1(); break;
    case 2: outcome = criterion_2(); break;
    case 3: outcome = criterion_3(); break;
    case 4: outcome = criterion_4(); break;
    case 5: outcome = criterion_5(); break;
    case 6: outcome = criterion_6(); break;
    case 7: outcome = criterion_7(); break;
    case 8: outcome = criterion_8(); break;
    case 9: outcome = criterion_9(); break;
    case 10: outcome = criterion_10(); break;
    default:
      std::fprintf(stderr, "usage: acceptance <criterion 1..10>\n");
      return 2;
  }
  std::printf("criterion %d: %s — %s\n", n, outcome.pass ? "PASS" : "FAIL",
              outcome.detail.c_str());
  return outcome.pass ? 0 : 1;
}
