// SPDX-License-Identifier: Apache-2.0
#include "fetinv/simd/kernels.hpp"

#include <cmath>

namespace fetinv::simd::scalar {
namespace {

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * ldc;
    const double* ai = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

OccupancySums occupancy(const double* boltz, const double* wa, const double* wd, std::size_t n,
                        double s) {
  OccupancySums out;
  for (std::size_t k = 0; k < n; ++k) {
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
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    w[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps_hat);
  }
}

void sigmoid(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] >= 0.0) {
      x[i] = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      x[i] = e / (1.0 + e);
    }
  }
}

void tanh(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

}  // namespace

const KernelTable table{&gemm, &occupancy, &adam, &sigmoid, &tanh};

}  // namespace fetinv::simd::scalar
