// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops shared by the reference model and the network
// engine. Every kernel has a portable scalar reference and an AVX2+FMA
// variant; the variant is picked once at startup from CPUID and can be
// pinned with FETINV_SIMD=scalar|avx2 or force_isa().

#include <cstddef>
#include <string_view>

namespace fetinv::simd {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa) noexcept;

/// Best ISA this CPU supports.
Isa detect_isa() noexcept;

/// ISA currently dispatched to.
Isa active_isa() noexcept;

/// Pin the dispatch target. Throws ConfigError if the CPU lacks the ISA.
void force_isa(Isa isa);

/// Fermi-occupancy reductions over a fixed quadrature node set.
///
/// With u_k = boltz[k] * s (that is exp((e_k - ef)/kT) when
/// boltz[k] = exp(e_k/kT) and s = exp(-ef/kT)) and f_k = 1/(1+u_k):
///   occupied     = sum_k wa[k] * f_k
///   empty        = sum_k wd[k] * u_k f_k
///   d_occupied   = sum_k wa[k] * u_k f_k^2
///   d_empty      = sum_k wd[k] * u_k f_k^2
/// The d_ terms times 1/kT are the derivatives with respect to ef.
struct OccupancySums {
  double occupied = 0.0;
  double empty = 0.0;
  double d_occupied = 0.0;
  double d_empty = 0.0;
};

struct KernelTable {
  /// C[m x n] += A[m x k] * B[k x n], all row-major with leading dimensions.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
               const double* b, std::size_t ldb, double* c, std::size_t ldc);

  OccupancySums (*occupancy)(const double* boltz, const double* wa, const double* wd,
                             std::size_t n, double s);

  /// In-place bias-corrected Adam update over n weights.
  /// step_size = lr * sqrt(1 - b2^t) / (1 - b1^t); eps_hat = eps * sqrt(1 - b2^t).
  void (*adam)(std::size_t n, double* w, const double* g, double* m, double* v, double beta1,
               double beta2, double step_size, double eps_hat);

  /// In-place logistic sigmoid and hyperbolic tangent over n values.
  void (*sigmoid)(double* x, std::size_t n);
  void (*tanh)(double* x, std::size_t n);
};

/// Kernels for the active ISA.
const KernelTable& kernels() noexcept;

/// Kernels for a specific ISA (used by the equivalence tests).
const KernelTable& kernels_for(Isa isa);

namespace scalar {
extern const KernelTable table;
}

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
extern const KernelTable table;
}
#endif

}  // namespace fetinv::simd
