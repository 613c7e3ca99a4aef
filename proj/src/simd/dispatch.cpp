// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "fetinv/error.hpp"
#include "fetinv/simd/kernels.hpp"

namespace fetinv::simd {
namespace {

bool cpu_has_avx2() noexcept {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() noexcept {
  const Isa best = detect_isa();
  if (const char* env = std::getenv("FETINV_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && best == Isa::avx2) return Isa::avx2;
  }
  return best;
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

Isa detect_isa() noexcept { return cpu_has_avx2() ? Isa::avx2 : Isa::scalar; }

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && detect_isa() != Isa::avx2)
    throw ConfigError("AVX2+FMA kernels requested but not supported by this CPU");
  current().store(isa, std::memory_order_relaxed);
}

const KernelTable& kernels_for(Isa isa) {
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::avx2) {
    if (detect_isa() != Isa::avx2) throw ConfigError("AVX2+FMA kernels not supported by this CPU");
    return avx2::table;
  }
#else
  if (isa == Isa::avx2) throw ConfigError("AVX2 kernels not built for this architecture");
#endif
  return scalar::table;
}

const KernelTable& kernels() noexcept {
#if defined(__x86_64__) || defined(_M_X64)
  if (active_isa() == Isa::avx2) return avx2::table;
#endif
  return scalar::table;
}

}  // namespace fetinv::simd
