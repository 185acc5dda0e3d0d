#include <cmath>
#include <vector>

#include "doctest.h"
#include "zipfmax/fast_math.hpp"

TEST_SUITE("fast_math") {
  TEST_CASE("fexp(float) tracks exp to 3e-7 relative over the working range") {
    double worst = 0.0;
    for (double x = -87.0; x <= 88.0; x += 0.0137) {
      const float xf = static_cast<float>(x);  // quantize once so both sides see one argument
      const double ref = std::exp(static_cast<double>(xf));
      const double got = zipfmax::fexp(xf);
      worst = std::max(worst, std::abs(got - ref) / ref);
    }
    CHECK(worst < 3e-7);
  }

  TEST_CASE("fexp spot values") {
    CHECK(zipfmax::fexp(0.0f) == 1.0f);
    CHECK(zipfmax::fexp(1.0f) == doctest::Approx(std::exp(1.0)).epsilon(1e-6));
    CHECK(zipfmax::fexp(-700.0f) >= 0.0f);                    // clamped, stays finite
    CHECK(std::isfinite(zipfmax::fexp(1000.0f)));             // clamped below overflow
    CHECK(zipfmax::fexp(2.5) == doctest::Approx(std::exp(2.5)).epsilon(1e-15));  // double path
  }

  TEST_CASE("log_sum_exp matches direct computation and resists overflow") {
    const std::vector<double> x{1.0, 2.0, 3.0};
    const double direct = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    CHECK(zipfmax::log_sum_exp<double>(x) == doctest::Approx(direct).epsilon(1e-12));

    const std::vector<double> big{1000.0, 1000.0};
    CHECK(zipfmax::log_sum_exp<double>(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));

    const std::vector<float> fx{-3.0f, 0.5f, 2.0f};
    const double fref = std::log(std::exp(-3.0) + std::exp(0.5) + std::exp(2.0));
    CHECK(zipfmax::log_sum_exp<float>(fx) == doctest::Approx(fref).epsilon(1e-6));
  }
}
