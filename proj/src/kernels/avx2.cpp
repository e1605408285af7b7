// Compiled with -mavx2 -mfma. Nothing here may run before the dispatcher has
// confirmed CPU support.

#include "mtnas/kernels/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace mtnas::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Each c[i][j] is an fma chain over p in ascending order, independent of the
// blocking, so rows never mix.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  const std::size_t n8 = n - n % 8;
  const std::size_t n4 = n - n % 4;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    std::size_t j = 0;
    for (; j < n8; j += 8) {
      __m256d x00 = _mm256_loadu_pd(c0 + j), x01 = _mm256_loadu_pd(c0 + j + 4);
      __m256d x10 = _mm256_loadu_pd(c1 + j), x11 = _mm256_loadu_pd(c1 + j + 4);
      __m256d x20 = _mm256_loadu_pd(c2 + j), x21 = _mm256_loadu_pd(c2 + j + 4);
      __m256d x30 = _mm256_loadu_pd(c3 + j), x31 = _mm256_loadu_pd(c3 + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
        const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
        __m256d s = _mm256_broadcast_sd(a0 + p);
        x00 = _mm256_fmadd_pd(s, b0, x00);
        x01 = _mm256_fmadd_pd(s, b1, x01);
        s = _mm256_broadcast_sd(a1 + p);
        x10 = _mm256_fmadd_pd(s, b0, x10);
        x11 = _mm256_fmadd_pd(s, b1, x11);
        s = _mm256_broadcast_sd(a2 + p);
        x20 = _mm256_fmadd_pd(s, b0, x20);
        x21 = _mm256_fmadd_pd(s, b1, x21);
        s = _mm256_broadcast_sd(a3 + p);
        x30 = _mm256_fmadd_pd(s, b0, x30);
        x31 = _mm256_fmadd_pd(s, b1, x31);
      }
      _mm256_storeu_pd(c0 + j, x00);
      _mm256_storeu_pd(c0 + j + 4, x01);
      _mm256_storeu_pd(c1 + j, x10);
      _mm256_storeu_pd(c1 + j + 4, x11);
      _mm256_storeu_pd(c2 + j, x20);
      _mm256_storeu_pd(c2 + j + 4, x21);
      _mm256_storeu_pd(c3 + j, x30);
      _mm256_storeu_pd(c3 + j + 4, x31);
    }
    for (std::size_t r = 0; r < 4; ++r) {
      const double* ar = a + (i + r) * k;
      double* cr = c + (i + r) * n;
      for (std::size_t jj = j; jj < n; ++jj) {
        double acc = cr[jj];
        for (std::size_t p = 0; p < k; ++p) acc = std::fma(ar[p], b[p * n + jj], acc);
        cr[jj] = acc;
      }
    }
  }
  for (; i < m; ++i) {
    const double* ar = a + i * k;
    double* cr = c + i * n;
    std::size_t j = 0;
    for (; j < n4; j += 4) {
      __m256d x = _mm256_loadu_pd(cr + j);
      for (std::size_t p = 0; p < k; ++p) {
        x = _mm256_fmadd_pd(_mm256_broadcast_sd(ar + p), _mm256_loadu_pd(b + p * n + j), x);
      }
      _mm256_storeu_pd(cr + j, x);
    }
    for (; j < n; ++j) {
      double acc = cr[j];
      for (std::size_t p = 0; p < k; ++p) acc = std::fma(ar[p], b[p * n + j], acc);
      cr[j] = acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* d,
             double* c) {
  const std::size_t n8 = n - n % 8;
  const std::size_t n4 = n - n % 4;
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    double* c0 = c + p * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    std::size_t j = 0;
    for (; j < n8; j += 8) {
      __m256d x00 = _mm256_loadu_pd(c0 + j), x01 = _mm256_loadu_pd(c0 + j + 4);
      __m256d x10 = _mm256_loadu_pd(c1 + j), x11 = _mm256_loadu_pd(c1 + j + 4);
      __m256d x20 = _mm256_loadu_pd(c2 + j), x21 = _mm256_loadu_pd(c2 + j + 4);
      __m256d x30 = _mm256_loadu_pd(c3 + j), x31 = _mm256_loadu_pd(c3 + j + 4);
      for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a + i * k + p;
        const __m256d d0 = _mm256_loadu_pd(d + i * n + j);
        const __m256d d1 = _mm256_loadu_pd(d + i * n + j + 4);
        __m256d s = _mm256_broadcast_sd(ar);
        x00 = _mm256_fmadd_pd(s, d0, x00);
        x01 = _mm256_fmadd_pd(s, d1, x01);
        s = _mm256_broadcast_sd(ar + 1);
        x10 = _mm256_fmadd_pd(s, d0, x10);
        x11 = _mm256_fmadd_pd(s, d1, x11);
        s = _mm256_broadcast_sd(ar + 2);
        x20 = _mm256_fmadd_pd(s, d0, x20);
        x21 = _mm256_fmadd_pd(s, d1, x21);
        s = _mm256_broadcast_sd(ar + 3);
        x30 = _mm256_fmadd_pd(s, d0, x30);
        x31 = _mm256_fmadd_pd(s, d1, x31);
      }
      _mm256_storeu_pd(c0 + j, x00);
      _mm256_storeu_pd(c0 + j + 4, x01);
      _mm256_storeu_pd(c1 + j, x10);
      _mm256_storeu_pd(c1 + j + 4, x11);
      _mm256_storeu_pd(c2 + j, x20);
      _mm256_storeu_pd(c2 + j + 4, x21);
      _mm256_storeu_pd(c3 + j, x30);
      _mm256_storeu_pd(c3 + j + 4, x31);
    }
    for (std::size_t r = 0; r < 4; ++r) {
      double* cr = c + (p + r) * n;
      for (std::size_t jj = j; jj < n; ++jj) {
        double acc = cr[jj];
        for (std::size_t i = 0; i < m; ++i) acc = std::fma(a[i * k + p + r], d[i * n + jj], acc);
        cr[jj] = acc;
      }
    }
  }
  for (; p < k; ++p) {
    double* cr = c + p * n;
    std::size_t j = 0;
    for (; j < n4; j += 4) {
      __m256d x = _mm256_loadu_pd(cr + j);
      for (std::size_t i = 0; i < m; ++i) {
        x = _mm256_fmadd_pd(_mm256_broadcast_sd(a + i * k + p), _mm256_loadu_pd(d + i * n + j), x);
      }
      _mm256_storeu_pd(cr + j, x);
    }
    for (; j < n; ++j) {
      double acc = cr[j];
      for (std::size_t i = 0; i < m; ++i) acc = std::fma(a[i * k + p], d[i * n + j], acc);
      cr[j] = acc;
    }
  }
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double acc = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) acc = std::fma(x[i], y[i], acc);
  return acc;
}

// Four dot products of one row of d against four rows of b at once.
void dot4(std::size_t n, const double* x, const double* y0, const double* y1, const double* y2,
          const double* y3, double* out) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const __m256d xv = _mm256_loadu_pd(x + j);
    s0 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(y0 + j), s0);
    s1 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(y1 + j), s1);
    s2 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(y2 + j), s2);
    s3 = _mm256_fmadd_pd(xv, _mm256_loadu_pd(y3 + j), s3);
  }
  double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
  for (; j < n; ++j) {
    r0 = std::fma(x[j], y0[j], r0);
    r1 = std::fma(x[j], y1[j], r1);
    r2 = std::fma(x[j], y2[j], r2);
    r3 = std::fma(x[j], y3[j], r3);
  }
  out[0] += r0;
  out[1] += r1;
  out[2] += r2;
  out[3] += r3;
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* d, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* dr = d + i * n;
    double* cr = c + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double* bp = b + p * n;
      dot4(n, dr, bp, bp + n, bp + 2 * n, bp + 3 * n, cr + p);
    }
    for (; p < k; ++p) cr[p] += dot(n, dr, b + p * n);
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d s = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(s, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void mul_acc(std::size_t n, const double* a, const double* b, double* y) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(a[i], b[i], y[i]);
}

constexpr KernelTable kAvx2{"avx2", gemm_nn, gemm_tn, gemm_nt, axpy, dot, mul_acc};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace mtnas::kernels

#else

namespace mtnas::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace mtnas::kernels

#endif
