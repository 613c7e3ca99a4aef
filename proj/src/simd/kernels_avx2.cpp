// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma; only reached through the dispatcher after a
// CPUID check.
#include "fetinv/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace fetinv::simd::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// 4 rows x 8 columns register block.
inline void block_4x8(std::size_t k, const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc) {
  __m256d c00 = _mm256_loadu_pd(c);
  __m256d c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc);
  __m256d c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc);
  __m256d c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc);
  __m256d c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  const double* a0 = a;
  const double* a1 = a + lda;
  const double* a2 = a + 2 * lda;
  const double* a3 = a + 3 * lda;
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    const __m256d b0 = _mm256_loadu_pd(bp);
    const __m256d b1 = _mm256_loadu_pd(bp + 4);
    __m256d av = _mm256_broadcast_sd(a0 + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a1 + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a2 + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a3 + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

// 1 row x 8 columns.
inline void block_1x8(std::size_t k, const double* a, const double* b, std::size_t ldb, double* c) {
  __m256d c0 = _mm256_loadu_pd(c);
  __m256d c1 = _mm256_loadu_pd(c + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    const __m256d av = _mm256_broadcast_sd(a + p);
    c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), c0);
    c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), c1);
  }
  _mm256_storeu_pd(c, c0);
  _mm256_storeu_pd(c + 4, c1);
}

// 1 row x 4 columns.
inline void block_1x4(std::size_t k, const double* a, const double* b, std::size_t ldb, double* c) {
  __m256d c0 = _mm256_loadu_pd(c);
  for (std::size_t p = 0; p < k; ++p) {
    c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p), _mm256_loadu_pd(b + p * ldb), c0);
  }
  _mm256_storeu_pd(c, c0);
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  const std::size_t n8 = n - n % 8;
  const std::size_t m4 = m - m % 4;
  // Column panels of 8 keep a k x 8 slice of B hot across row blocks.
  for (std::size_t j = 0; j < n8; j += 8) {
    std::size_t i = 0;
    for (; i < m4; i += 4) block_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc);
    for (; i < m; ++i) block_1x8(k, a + i * lda, b + j, ldb, c + i * ldc + j);
  }
  std::size_t j = n8;
  if (n - j >= 4) {
    for (std::size_t i = 0; i < m; ++i) block_1x4(k, a + i * lda, b + j, ldb, c + i * ldc + j);
    j += 4;
  }
  if (j < n) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* ai = a + i * lda;
      double* ci = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = ai[p];
        const double* bp = b + p * ldb;
        for (std::size_t jj = j; jj < n; ++jj) ci[jj] += aip * bp[jj];
      }
    }
  }
}

OccupancySums occupancy(const double* boltz, const double* wa, const double* wd, std::size_t n,
                        double s) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d sv = _mm256_set1_pd(s);
  __m256d occ = _mm256_setzero_pd();
  __m256d emp = _mm256_setzero_pd();
  __m256d docc = _mm256_setzero_pd();
  __m256d demp = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d u = _mm256_mul_pd(_mm256_loadu_pd(boltz + k), sv);
    const __m256d f = _mm256_div_pd(one, _mm256_add_pd(one, u));
    const __m256d uf = _mm256_mul_pd(u, f);
    const __m256d uff = _mm256_mul_pd(uf, f);
    const __m256d a = _mm256_loadu_pd(wa + k);
    const __m256d d = _mm256_loadu_pd(wd + k);
    occ = _mm256_fmadd_pd(a, f, occ);
    emp = _mm256_fmadd_pd(d, uf, emp);
    docc = _mm256_fmadd_pd(a, uff, docc);
    demp = _mm256_fmadd_pd(d, uff, demp);
  }
  OccupancySums out{hsum(occ), hsum(emp), hsum(docc), hsum(demp)};
  for (; k < n; ++k) {
    const double u = boltz[k] * s;
    const double f = 1.0 / (1.0 + u);
    const double uf = u * f;
    const double uff = uf * f;
    out.occupied += wa[k] * f;
    out.empty += wd[k] * uf;
    out.d_occupied += wa[k] * uff;
    out.d_empty += wd[k] * uff;
  }
  return out;
}

void adam(std::size_t n, double* w, const double* g, double* m, double* v, double beta1,
          double beta2, double step_size, double eps_hat) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d c1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d c2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d step = _mm256_set1_pd(step_size);
  const __m256d eps = _mm256_set1_pd(eps_hat);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(c1, gi));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(c2, _mm256_mul_pd(gi, gi)));
    const __m256d upd =
        _mm256_div_pd(_mm256_mul_pd(step, mi), _mm256_add_pd(_mm256_sqrt_pd(vi), eps));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    w[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps_hat);
  }
}

// y = n ln2 + r with |r| <= ln2/2, y <= 0. Returns 2^n in scale and
// expm1(r) from its Taylor series to degree 13 (truncation < 2e-17
// relative). Then exp(y) = 2^n (1 + p) and expm1(y) = 2^n p + (2^n - 1);
// the latter keeps full relative accuracy near zero because n = 0 there.
// Inputs below -700 are clamped, where exp(y) is already below 1e-304.
inline __m256d exp_core(__m256d y, __m256d& scale) {
  y = _mm256_max_pd(y, _mm256_set1_pd(-700.0));
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(y, _mm256_set1_pd(1.4426950408889634)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93147180369123816490e-01), y);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.90821492927058770002e-10), r);
  static constexpr double c[] = {1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0,
                                 1.0 / 3628800.0,    1.0 / 362880.0,    1.0 / 40320.0,
                                 1.0 / 5040.0,       1.0 / 720.0,       1.0 / 120.0,
                                 1.0 / 24.0,         1.0 / 6.0,         0.5,
                                 1.0};
  __m256d p = _mm256_set1_pd(c[0]);
  for (std::size_t k = 1; k < 13; ++k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[k]));
  const __m128i ni = _mm256_cvtpd_epi32(n);
  const __m256i bits =
      _mm256_slli_epi64(_mm256_add_epi64(_mm256_cvtepi32_epi64(ni), _mm256_set1_epi64x(1023)), 52);
  scale = _mm256_castsi256_pd(bits);
  return _mm256_mul_pd(p, r);
}

inline __m256d exp_nonpos(__m256d y) {
  __m256d scale;
  const __m256d p = exp_core(y, scale);
  return _mm256_fmadd_pd(scale, p, scale);
}

inline __m256d expm1_nonpos(__m256d y) {
  __m256d scale;
  const __m256d p = exp_core(y, scale);
  return _mm256_fmadd_pd(scale, p, _mm256_sub_pd(scale, _mm256_set1_pd(1.0)));
}

inline __m256d abs_pd(__m256d x) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), x); }

void sigmoid(double* x, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    // e = exp(-|v|); sigmoid = 1/(1+e) for v >= 0, e/(1+e) otherwise
    const __m256d e = exp_nonpos(_mm256_sub_pd(_mm256_setzero_pd(), abs_pd(v)));
    const __m256d num = _mm256_blendv_pd(one, e, _mm256_cmp_pd(v, _mm256_setzero_pd(), _CMP_LT_OQ));
    _mm256_storeu_pd(x + i, _mm256_div_pd(num, _mm256_add_pd(one, e)));
  }
  for (; i < n; ++i) {
    if (x[i] >= 0.0) {
      x[i] = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      x[i] = e / (1.0 + e);
    }
  }
}

void tanh(double* x, std::size_t n) {
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d sign = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    // tanh|v| = -m / (m + 2) with m = expm1(-2|v|)
    const __m256d m = expm1_nonpos(_mm256_mul_pd(_mm256_set1_pd(-2.0), abs_pd(v)));
    const __m256d t = _mm256_div_pd(_mm256_xor_pd(m, sign), _mm256_add_pd(m, two));
    _mm256_storeu_pd(x + i, _mm256_or_pd(abs_pd(t), _mm256_and_pd(v, sign)));
  }
  for (; i < n; ++i) x[i] = std::tanh(x[i]);
}

}  // namespace

const KernelTable table{&gemm, &occupancy, &adam, &sigmoid, &tanh};

}  // namespace fetinv::simd::avx2
