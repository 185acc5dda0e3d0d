#include "zipfmax/timing.hpp"

#include <algorithm>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

#include "zipfmax/matrix.hpp"
#include "zipfmax/rng.hpp"

namespace zipfmax {

template <typename T>
TimingSample time_gemm(int64_t d, int64_t k, int64_t batch, int repeats) {
  if (repeats < 3) {
    throw std::invalid_argument("time_gemm: repeats must be >= 3, got " + std::to_string(repeats));
  }
  if (d < 1 || k < 1 || batch < 1) {
    throw std::invalid_argument("time_gemm: dims must be >= 1, got d=" + std::to_string(d) +
                                " k=" + std::to_string(k) + " batch=" + std::to_string(batch));
  }
  try {
    Matrix<T> hidden(batch, d);
    Matrix<T> weight(d, k);
    Matrix<T> out(batch, k);
    Rng rng(0x7461696d696e67ULL ^ static_cast<uint64_t>(d * 1315423911 + k));
    fill_uniform(hidden, rng, T(-1), T(1));
    fill_uniform(weight, rng, T(-1), T(1));

    gemm_into(hidden, Trans::none, weight, Trans::none, out);  // warm-up, untimed

    std::vector<double> times(static_cast<size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
      Stopwatch sw;
      gemm_into(hidden, Trans::none, weight, Trans::none, out);
      times[static_cast<size_t>(r)] = sw.seconds();
    }
    std::nth_element(times.begin(), times.begin() + repeats / 2, times.end());
    const double median = times[static_cast<size_t>(repeats / 2)];

    TimingSample s;
    s.k = k;
    s.batch = batch;
    s.seconds = std::max(median, 1e-9);  // clock resolution floor keeps seconds > 0
    s.threads = gemm_threads();
    return s;
  } catch (const std::bad_alloc&) {
    throw std::runtime_error("time_gemm: allocation failed for d=" + std::to_string(d) +
                             " k=" + std::to_string(k) + " batch=" + std::to_string(batch));
  }
}

template TimingSample time_gemm<float>(int64_t, int64_t, int64_t, int);
template TimingSample time_gemm<double>(int64_t, int64_t, int64_t, int);

}  // namespace zipfmax
