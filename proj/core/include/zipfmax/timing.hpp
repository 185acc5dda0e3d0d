#pragma once

#include <chrono>
#include <cstdint>

namespace zipfmax {

// One timed matrix-product measurement. `seconds` is the median over the
// repeat loop; `threads` records the gemm worker count in effect.
struct TimingSample {
  int64_t k = 0;
  int64_t batch = 0;
  double seconds = 0.0;
  int threads = 1;
};

// Median wall time of `repeats` products hidden[batch x d] * weight[d x k].
// Inputs are freshly filled once per call; one untimed warm-up precedes the
// timed loop. Requires repeats >= 3; allocation failure is reported with the
// requested dims.
template <typename T>
TimingSample time_gemm(int64_t d, int64_t k, int64_t batch, int repeats);

// Monotonic wall-clock stopwatch.
class Stopwatch {
 public:
  Stopwatch() : start_(clock::now()) {}
  void reset() { start_ = clock::now(); }
  double seconds() const {
    return std::chrono::duration<double>(clock::now() - start_).count();
  }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_;
};

}  // namespace zipfmax
