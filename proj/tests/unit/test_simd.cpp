// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fetinv/simd/kernels.hpp"

using namespace fetinv::simd;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

bool have_avx2() { return detect_isa() == Isa::avx2; }

}  // namespace

TEST_CASE("scalar gemm matches a naive triple loop") {
  std::mt19937_64 rng(11);
  const std::size_t m = 7, n = 13, k = 5;
  auto a = random_vec(m * k, rng), b = random_vec(k * n, rng), c = random_vec(m * n, rng);
  auto ref = c;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a[i * k + p] * b[p * n + j];
  kernels_for(Isa::scalar).gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-14));
}

TEST_CASE("avx2 gemm agrees with scalar over awkward shapes") {
  if (!have_avx2()) return;
  std::mt19937_64 rng(12);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 8, 3}, {5, 9, 17}, {33, 31, 29},
                                   {64, 128, 32}, {2, 4, 1}, {17, 3, 40}};
  for (auto& s : shapes) {
    const std::size_t m = s[0], n = s[1], k = s[2];
    // Padded leading dimensions exercise the stride handling.
    const std::size_t lda = k + 3, ldb = n + 1, ldc = n + 2;
    auto a = random_vec(m * lda, rng), b = random_vec(k * ldb, rng), c0 = random_vec(m * ldc, rng);
    auto c1 = c0;
    kernels_for(Isa::scalar).gemm(m, n, k, a.data(), lda, b.data(), ldb, c0.data(), ldc);
    kernels_for(Isa::avx2).gemm(m, n, k, a.data(), lda, b.data(), ldb, c1.data(), ldc);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < ldc; ++j) {
        const double x = c0[i * ldc + j], y = c1[i * ldc + j];
        if (j >= n) {
          CHECK(x == y);  // padding untouched
        } else {
          CHECK(std::abs(x - y) <= 1e-13 * (1.0 + std::abs(x)) * static_cast<double>(k));
        }
      }
    }
  }
}

TEST_CASE("occupancy kernels agree") {
  std::mt19937_64 rng(13);
  for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 384u, 385u}) {
    auto e = random_vec(n, rng, -1.5, 0.0);
    std::vector<double> boltz(n), wa = random_vec(n, rng, 0.0, 1e12), wd = random_vec(n, rng, 0.0, 1e12);
    for (std::size_t i = 0; i < n; ++i) boltz[i] = std::exp(e[i] / 0.025852);
    for (double ef : {-2.0, -0.7, -0.1, 0.0, 0.3}) {
      const double s = std::exp(-ef / 0.025852);
      const auto r0 = kernels_for(Isa::scalar).occupancy(boltz.data(), wa.data(), wd.data(), n, s);
      // Independent direct evaluation.
      double occ = 0, emp = 0, docc = 0, demp = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double u = boltz[i] * s, f = 1.0 / (1.0 + u);
        occ += wa[i] * f;
        emp += wd[i] * u * f;
        docc += wa[i] * u * f * f;
        demp += wd[i] * u * f * f;
      }
      CHECK(r0.occupied == doctest::Approx(occ).epsilon(1e-13));
      CHECK(r0.empty == doctest::Approx(emp).epsilon(1e-13));
      CHECK(r0.d_occupied == doctest::Approx(docc).epsilon(1e-13));
      CHECK(r0.d_empty == doctest::Approx(demp).epsilon(1e-13));
      if (!have_avx2()) continue;
      const auto r1 = kernels_for(Isa::avx2).occupancy(boltz.data(), wa.data(), wd.data(), n, s);
      CHECK(r1.occupied == doctest::Approx(r0.occupied).epsilon(1e-13));
      CHECK(r1.empty == doctest::Approx(r0.empty).epsilon(1e-13));
      CHECK(r1.d_occupied == doctest::Approx(r0.d_occupied).epsilon(1e-13));
      CHECK(r1.d_empty == doctest::Approx(r0.d_empty).epsilon(1e-13));
    }
  }
}

TEST_CASE("adam kernels agree with the textbook update") {
  std::mt19937_64 rng(14);
  const std::size_t n = 37;
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  auto w0 = random_vec(n, rng), m0 = random_vec(n, rng, -0.1, 0.1), v0 = random_vec(n, rng, 0.0, 0.01);
  auto g = random_vec(n, rng);
  const int t = 3;
  const double step = lr * std::sqrt(1 - std::pow(b2, t)) / (1 - std::pow(b1, t));
  const double eps_hat = eps * std::sqrt(1 - std::pow(b2, t));

  auto w = w0, m = m0, v = v0;
  kernels_for(Isa::scalar).adam(n, w.data(), g.data(), m.data(), v.data(), b1, b2, step, eps_hat);
  for (std::size_t i = 0; i < n; ++i) {
    const double mi = b1 * m0[i] + (1 - b1) * g[i];
    const double vi = b2 * v0[i] + (1 - b2) * g[i] * g[i];
    const double mhat = mi / (1 - std::pow(b1, t)), vhat = vi / (1 - std::pow(b2, t));
    CHECK(w[i] == doctest::Approx(w0[i] - lr * mhat / (std::sqrt(vhat) + eps)).epsilon(1e-12));
    CHECK(m[i] == doctest::Approx(mi).epsilon(1e-15));
    CHECK(v[i] == doctest::Approx(vi).epsilon(1e-15));
  }
  if (!have_avx2()) return;
  auto w2 = w0, m2 = m0, v2 = v0;
  kernels_for(Isa::avx2).adam(n, w2.data(), g.data(), m2.data(), v2.data(), b1, b2, step, eps_hat);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(w2[i] == doctest::Approx(w[i]).epsilon(1e-15));
    CHECK(m2[i] == doctest::Approx(m[i]).epsilon(1e-15));
    CHECK(v2[i] == doctest::Approx(v[i]).epsilon(1e-15));
  }
}

TEST_CASE("activation kernels agree with libm") {
  std::mt19937_64 rng(29);
  std::vector<double> x = {0.0, -0.0, 1e-300, -1e-300, 1e-9, -1e-9, 0.3465, -0.3466, 0.35, -0.35,
                           1.0, -1.0, 19.0, -19.0, 40.0, -40.0, 400.0, -400.0, 800.0, -800.0};
  for (double scale : {1e-6, 1e-2, 1.0, 5.0, 30.0}) {
    auto v = random_vec(257, rng, -scale, scale);
    x.insert(x.end(), v.begin(), v.end());
  }
  const std::size_t n = x.size();
  std::vector<double> sig_ref(n), tanh_ref(n);
  for (std::size_t i = 0; i < n; ++i) {
    sig_ref[i] = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
    tanh_ref[i] = std::tanh(x[i]);
  }
  for (Isa isa : {Isa::scalar, Isa::avx2}) {
    if (isa == Isa::avx2 && !have_avx2()) continue;
    CAPTURE(to_string(isa));
    const auto& k = kernels_for(isa);
    auto s = x, t = x;
    k.sigmoid(s.data(), n);
    k.tanh(t.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      CAPTURE(x[i]);
      CHECK(std::abs(s[i] - sig_ref[i]) <= 6.7e-16 * std::abs(sig_ref[i]) + 1e-300);
      CHECK(std::abs(t[i] - tanh_ref[i]) <= 6.7e-16 * std::abs(tanh_ref[i]));
      CHECK(std::signbit(t[i]) == std::signbit(x[i]));
    }
  }
}

TEST_CASE("isa pinning round trips") {
  const Isa before = active_isa();
  force_isa(Isa::scalar);
  CHECK(active_isa() == Isa::scalar);
  CHECK(kernels().gemm == kernels_for(Isa::scalar).gemm);
  force_isa(before);
  CHECK(active_isa() == before);
}
