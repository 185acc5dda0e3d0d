#include "zipfmax/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#ifdef ZIPFMAX_USE_CBLAS
#include <dlfcn.h>
#endif

namespace zipfmax {

namespace {

int g_gemm_threads = 1;

#ifdef ZIPFMAX_USE_CBLAS
// CBLAS ABI constants; identical across implementations.
constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

using SgemmFn = void (*)(int order, int ta, int tb, int m, int n, int k, float alpha,
                         const float* a, int lda, const float* b, int ldb, float beta, float* c,
                         int ldc);
using DgemmFn = void (*)(int order, int ta, int tb, int m, int n, int k, double alpha,
                         const double* a, int lda, const double* b, int ldb, double beta,
                         double* c, int ldc);
using SetThreadsFn = void (*)(int);

struct BlasRuntime {
  SgemmFn sgemm = nullptr;
  DgemmFn dgemm = nullptr;
  SetThreadsFn set_threads = nullptr;
  bool available() const { return sgemm != nullptr && dgemm != nullptr; }
};

BlasRuntime load_blas() {
  // OpenBLAS picks its kernel inside the library constructor, so the core
  // type must be pinned before the library is loaded. Loading lazily here
  // (instead of linking) is what makes that possible: the runtime detector
  // misreads this CPU and falls back to a pre-AVX kernel that is ~4x slower.
  if (std::getenv("OPENBLAS_CORETYPE") == nullptr && __builtin_cpu_supports("avx512f")) {
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
  }
  const char* candidates[] = {
#ifdef ZIPFMAX_OPENBLAS_PATH
      ZIPFMAX_OPENBLAS_PATH,
#endif
      "libopenblas.so.0",
      "libopenblas.so",
  };
  void* handle = nullptr;
  for (const char* name : candidates) {
    handle = dlopen(name, RTLD_NOW | RTLD_LOCAL);
    if (handle != nullptr) break;
  }
  BlasRuntime rt;
  if (handle != nullptr) {
    rt.sgemm = reinterpret_cast<SgemmFn>(dlsym(handle, "cblas_sgemm"));
    rt.dgemm = reinterpret_cast<DgemmFn>(dlsym(handle, "cblas_dgemm"));
    rt.set_threads = reinterpret_cast<SetThreadsFn>(dlsym(handle, "openblas_set_num_threads"));
    if (rt.set_threads != nullptr) rt.set_threads(g_gemm_threads);
  }
  return rt;
}

BlasRuntime& blas() {
  static BlasRuntime rt = load_blas();
  return rt;
}
#endif  // ZIPFMAX_USE_CBLAS

template <typename T>
void gemm_blocked(const Matrix<T>& a, Trans ta, const Matrix<T>& b, Trans tb, Matrix<T>& c,
                  T alpha, T beta) {
  const int64_t m = c.rows();
  const int64_t n = c.cols();
  const int64_t kk = (ta == Trans::none) ? a.cols() : a.rows();

  if (beta == T(0)) {
    c.set_zero();
  } else if (beta != T(1)) {
    for (size_t i = 0; i < c.size(); ++i) c.data()[i] *= beta;
  }

  constexpr int64_t BI = 64, BK = 64, BJ = 256;
  for (int64_t i0 = 0; i0 < m; i0 += BI) {
    const int64_t i1 = std::min(i0 + BI, m);
    for (int64_t k0 = 0; k0 < kk; k0 += BK) {
      const int64_t k1 = std::min(k0 + BK, kk);
      for (int64_t j0 = 0; j0 < n; j0 += BJ) {
        const int64_t j1 = std::min(j0 + BJ, n);
        for (int64_t i = i0; i < i1; ++i) {
          for (int64_t k = k0; k < k1; ++k) {
            const T aik = alpha * ((ta == Trans::none) ? a(i, k) : a(k, i));
            if (aik == T(0)) continue;
            T* crow = c.data() + static_cast<size_t>(i) * n;
            if (tb == Trans::none) {
              const T* brow = b.data() + static_cast<size_t>(k) * n;
              for (int64_t j = j0; j < j1; ++j) crow[j] += aik * brow[j];
            } else {
              for (int64_t j = j0; j < j1; ++j) crow[j] += aik * b(j, k);
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm_into(const Matrix<T>& a, Trans ta, const Matrix<T>& b, Trans tb, Matrix<T>& c,
               T alpha, T beta) {
  const int64_t m = (ta == Trans::none) ? a.rows() : a.cols();
  const int64_t ka = (ta == Trans::none) ? a.cols() : a.rows();
  const int64_t kb = (tb == Trans::none) ? b.rows() : b.cols();
  const int64_t n = (tb == Trans::none) ? b.cols() : b.rows();
  if (ka != kb) {
    throw std::invalid_argument("gemm: inner dimensions differ, lhs " + a.shape() + " rhs " +
                                b.shape());
  }
  if (c.rows() != m || c.cols() != n) {
    throw std::invalid_argument("gemm: output shape " + c.shape() + " does not match " +
                                Matrix<T>::shape_string(m, n));
  }
  if (m == 0 || n == 0) return;
  if (ka == 0) {
    if (beta == T(0)) c.set_zero();
    return;
  }

#ifdef ZIPFMAX_USE_CBLAS
  const BlasRuntime& rt = blas();
  if (rt.available()) {
    const int cta = (ta == Trans::none) ? kNoTrans : kTrans;
    const int ctb = (tb == Trans::none) ? kNoTrans : kTrans;
    if constexpr (std::is_same_v<T, float>) {
      rt.sgemm(kRowMajor, cta, ctb, static_cast<int>(m), static_cast<int>(n),
               static_cast<int>(ka), alpha, a.data(), static_cast<int>(a.cols()), b.data(),
               static_cast<int>(b.cols()), beta, c.data(), static_cast<int>(n));
    } else {
      rt.dgemm(kRowMajor, cta, ctb, static_cast<int>(m), static_cast<int>(n),
               static_cast<int>(ka), alpha, a.data(), static_cast<int>(a.cols()), b.data(),
               static_cast<int>(b.cols()), beta, c.data(), static_cast<int>(n));
    }
    return;
  }
#endif
  gemm_blocked(a, ta, b, tb, c, alpha, beta);
}

template <typename T>
bool all_finite(const Matrix<T>& m) {
  for (size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) return false;
  }
  return true;
}

template <typename T>
double squared_norm(const Matrix<T>& m) {
  double s = 0.0;
  for (size_t i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];
    s += v * v;
  }
  return s;
}

template <typename T>
void add_scaled(Matrix<T>& y, const Matrix<T>& x, T alpha) {
  if (!y.same_shape(x)) {
    throw std::invalid_argument("add_scaled: shape mismatch " + y.shape() + " vs " + x.shape());
  }
  for (size_t i = 0; i < y.size(); ++i) y.data()[i] += alpha * x.data()[i];
}

void set_gemm_threads(int n) {
  g_gemm_threads = std::max(1, n);
#ifdef ZIPFMAX_USE_CBLAS
  const BlasRuntime& rt = blas();
  if (rt.set_threads != nullptr) rt.set_threads(g_gemm_threads);
#endif
}

int gemm_threads() { return g_gemm_threads; }

const char* gemm_backend() {
#ifdef ZIPFMAX_USE_CBLAS
  if (blas().available()) return "cblas";
#endif
  return "blocked";
}

template class Matrix<float>;
template class Matrix<double>;

template void gemm_into<float>(const Matrix<float>&, Trans, const Matrix<float>&, Trans,
                               Matrix<float>&, float, float);
template void gemm_into<double>(const Matrix<double>&, Trans, const Matrix<double>&, Trans,
                                Matrix<double>&, double, double);
template bool all_finite<float>(const Matrix<float>&);
template bool all_finite<double>(const Matrix<double>&);
template double squared_norm<float>(const Matrix<float>&);
template double squared_norm<double>(const Matrix<double>&);
template void add_scaled<float>(Matrix<float>&, const Matrix<float>&, float);
template void add_scaled<double>(Matrix<double>&, const Matrix<double>&, double);

}  // namespace zipfmax
