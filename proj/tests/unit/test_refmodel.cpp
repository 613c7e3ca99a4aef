// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "fetinv/error.hpp"
#include "fetinv/refmodel/dataset.hpp"
#include "fetinv/refmodel/physics.hpp"

using namespace fetinv;
using namespace fetinv::refmodel;

namespace {

constexpr double kT = 0.025852;

DeviceParams mid_point() {
  DeviceParams p;
  p.mu = 15.0;
  p.phi_b0 = 0.15;
  p.n_c = 3e12;
  p.n_d0 = 1e13;
  p.e_d_mid = 0.1;
  p.sigma_d = 0.06;
  p.n_a0 = 1e13;
  p.sigma_a = 0.1;
  return p;
}

// Brute-force composite trapezoid on [a, b].
template <class F>
double trapezoid(F&& f, double a, double b, std::size_t panels) {
  const double h = (b - a) / static_cast<double>(panels);
  double s = 0.5 * (f(a) + f(b));
  for (std::size_t i = 1; i < panels; ++i) s += f(a + h * static_cast<double>(i));
  return s * h;
}

double fermi_occ(double x) { return 1.0 / (1.0 + std::exp(x / kT)); }

// Densities restated from their closed forms, taking the left limit at E_C
// so the trapezoid oracle sees no endpoint jump.
double acc_oracle(double e, const DeviceParams& p) { return p.n_a0 * std::exp(-std::abs(e) / p.sigma_a); }
double don_oracle(double e, const DeviceParams& p) {
  const double d = e + p.e_d_mid;
  return p.n_d0 * std::exp(-d * d / (2.0 * p.sigma_d * p.sigma_d));
}

// Charge balance written out directly from the densities, using the
// trapezoid oracle for both trap integrals.
double balance_oracle(double ef, double vgs, const DeviceParams& p, const PhysicalConstants& c) {
  const double nfree = p.n_c * std::log1p(std::exp(ef / kT));
  const double trapped = trapezoid([&](double e) { return acc_oracle(e, p) * fermi_occ(e - ef); },
                                   c.e_min, 0.0, 200000);
  const double ionized = trapezoid(
      [&](double e) { return don_oracle(e, p) * (1.0 - fermi_occ(e - ef)); }, c.e_min, 0.0, 200000);
  return c.c_ox * (vgs - c.v_fb) / c.q - (nfree + trapped - ionized);
}

std::vector<DeviceParams> sample_devices(std::size_t n, std::uint64_t master) {
  std::vector<DeviceParams> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_params(default_ranges(), device_seed(master, i)));
  return out;
}

}  // namespace

TEST_CASE("defect profiles") {
  const DeviceParams p = mid_point();
  CHECK(donor_density(-p.e_d_mid, p) == doctest::Approx(p.n_d0));
  CHECK(donor_density(-p.e_d_mid + p.sigma_d, p) == doctest::Approx(p.n_d0 * std::exp(-0.5)));
  CHECK(donor_density(-p.e_d_mid - p.sigma_d, p) == doctest::Approx(p.n_d0 * std::exp(-0.5)));
  CHECK(donor_density(0.05, p) == 0.0);
  CHECK(acceptor_density(-1e-15, p) == doctest::Approx(p.n_a0));
  CHECK(acceptor_density(-p.sigma_a, p) == doctest::Approx(p.n_a0 / std::exp(1.0)));
  CHECK(acceptor_density(0.01, p) == 0.0);
}

TEST_CASE("free carrier density") {
  const DeviceParams p = mid_point();
  CHECK(free_carrier_density(0.0, p) == doctest::Approx(p.n_c * std::log(2.0)));
  // ln(1 + e^-10) = 4.5398899e-5
  CHECK(free_carrier_density(-10 * kT, p) == doctest::Approx(4.5398899216870535e-5 * p.n_c).epsilon(1e-12));
  double prev = 0.0;
  for (double ef = -2.0; ef <= 2.0; ef += 0.01) {
    const double n = free_carrier_density(ef, p);
    CHECK(n > prev);
    prev = n;
  }
}

TEST_CASE("trap integrals against a 1e6-panel trapezoid oracle") {
  const PhysicalConstants c;
  DeviceParams p = mid_point();
  p.sigma_a = 0.1;
  p.n_a0 = 1e13;
  const double oracle =
      trapezoid([&](double e) { return acc_oracle(e, p) * fermi_occ(e); }, c.e_min, 0.0, 1000000);
  CHECK(std::abs(trapped_acceptor_charge(0.0, p) / oracle - 1.0) < 1e-6);

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> uef(-1.0, 0.3);
  const auto devices = sample_devices(100, 77);
  double worst = 0.0;
  for (const auto& d : devices) {
    const double ef = uef(rng);
    const double acc = trapezoid([&](double e) { return acc_oracle(e, d) * fermi_occ(e - ef); },
                                 c.e_min, 0.0, 1000000);
    const double don = trapezoid(
        [&](double e) { return don_oracle(e, d) * (1.0 - fermi_occ(e - ef)); }, c.e_min, 0.0, 1000000);
    worst = std::max(worst, std::abs(trapped_acceptor_charge(ef, d) - acc) / acc);
    worst = std::max(worst, std::abs(ionized_donor_charge(ef, d) - don) / don);
    // Tabulated rule used on the hot path.
    DeviceModel m(d);
    const ChargeState st = m.charge(ef);
    worst = std::max(worst, std::abs(st.trapped - acc) / acc);
    worst = std::max(worst, std::abs(st.ionized - don) / don);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("trap integral limits") {
  DeviceParams p = mid_point();
  DeviceParams none = p;
  none.n_a0 = 0.0;
  none.n_d0 = 0.0;
  CHECK(trapped_acceptor_charge(0.0, none) == 0.0);
  CHECK(ionized_donor_charge(0.0, none) == 0.0);
  CHECK(trapped_acceptor_charge(-30.0, p) < 1e-100);
  CHECK(ionized_donor_charge(30.0, p) < 1e-100);

  // Fully ionized donors: closed-form truncated Gaussian over (-inf, 0).
  for (double sd : {0.02, 0.07, 0.2}) {
    for (double em : {0.02, 0.1, 0.2}) {
      p.sigma_d = sd;
      p.e_d_mid = em;
      const double full = p.n_d0 * sd * std::sqrt(M_PI / 2.0) * (1.0 + std::erf(em / (sd * std::sqrt(2.0))));
      CHECK(std::abs(ionized_donor_charge(-10.0, p) / full - 1.0) < 1e-6);
    }
  }

  // Monotone in ef.
  p = mid_point();
  double acc_prev = -1.0, don_prev = 1e300;
  for (double ef = -1.2; ef <= 0.5; ef += 0.05) {
    const double a = trapped_acceptor_charge(ef, p), d = ionized_donor_charge(ef, p);
    CHECK(a >= acc_prev);
    CHECK(d <= don_prev);
    acc_prev = a;
    don_prev = d;
  }
}

TEST_CASE("surface Fermi level against a bisection oracle") {
  const PhysicalConstants c;
  const DeviceParams p = mid_point();
  for (double vgs : {-3.0, 0.0, 5.0, 20.0, 49.9}) {
    double lo = c.ef_lo, hi = c.ef_hi;
    REQUIRE(balance_oracle(lo, vgs, p, c) > 0.0);
    while (hi - lo > 1e-9) {
      const double mid = 0.5 * (lo + hi);
      (balance_oracle(mid, vgs, p, c) > 0.0 ? lo : hi) = mid;
    }
    const SurfaceSolution s = solve_surface_ef(vgs, p);
    CHECK_FALSE(s.depleted);
    CHECK(std::abs(s.ef - 0.5 * (lo + hi)) < 1e-6);
  }
}

TEST_CASE("surface solve: depletion, domain error and monotonicity") {
  DeviceParams p = mid_point();
  p.n_a0 = 0.0;
  p.n_d0 = 0.0;
  const SurfaceSolution flat = solve_surface_ef(0.0, p);
  CHECK(flat.depleted);
  CHECK(flat.ef == PhysicalConstants{}.ef_lo);

  // Strongly positive gate with a tiny density of states pushes ef past the ceiling.
  DeviceParams tiny = mid_point();
  tiny.n_c = 1e3;
  CHECK_THROWS_AS(solve_surface_ef(1e4, tiny), ModelDomainError);

  p = mid_point();
  double prev = -10.0;
  for (double v = -5.9; v <= 49.9; v += 0.45) {
    const double ef = solve_surface_ef(v, p).ef;
    CHECK(ef >= prev);
    prev = ef;
  }
}

TEST_CASE("surface solve residual over 1000 random pairs") {
  std::mt19937_64 rng(5150);
  std::uniform_real_distribution<double> uv(-5.9, 49.9);
  const auto devices = sample_devices(1000, 31);
  double worst = 0.0;
  for (const auto& d : devices) {
    const SurfaceSolution s = solve_surface_ef(uv(rng), d);
    if (!s.depleted) worst = std::max(worst, s.residual);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("contact resistance") {
  PhysicalConstants c;
  DeviceParams p = mid_point();
  p.phi_b0 = 0.1;
  const double r1 = contact_resistance(10.0, p, c);
  p.phi_b0 = 0.2;
  const double r2 = contact_resistance(10.0, p, c);
  CHECK(r2 / r1 == doctest::Approx(std::exp(0.1 / kT)).epsilon(1e-12));
  CHECK(r2 / r1 == doctest::Approx(47.9).epsilon(1e-3));

  // Normalization: phi_b0 = 0 and n = n_c gives rho_c0. Choose vgs so that
  // the free density equals n_c without traps.
  DeviceParams bare = mid_point();
  bare.phi_b0 = 0.0;
  bare.n_a0 = 0.0;
  bare.n_d0 = 0.0;
  const double vgs_nc = c.q * bare.n_c / c.c_ox + c.v_fb;
  CHECK(contact_resistance(vgs_nc, bare, c) == doctest::Approx(c.rho_c0).epsilon(1e-6));

  p = mid_point();
  double prev = 1e300;
  for (double v = -5.9; v <= 49.9; v += 1.8) {
    const double r = contact_resistance(v, p, c);
    CHECK(r <= prev);
    prev = r;
  }
}

TEST_CASE("channel current: ohmic limit and zero drop") {
  const PhysicalConstants c;
  const DeviceParams p = mid_point();
  for (double vgs : {0.0, 10.0, 40.0}) {
    CHECK(channel_current_gca(0.0, vgs, p) == 0.0);
    const double ns = free_carrier_density(solve_surface_ef(vgs, p).ef, p);
    // A/cm -> uA/um is a factor 1e6 / 1e4.
    const double ohmic = 1e-3 * c.q * p.mu * ns / c.l_ch * 100.0;
    CHECK(std::abs(channel_current_gca(1e-3, vgs, p) / ohmic - 1.0) < 1e-2);
  }
  CHECK_THROWS_AS(channel_current_gca(-0.1, 0.0, p), ContractError);

  // Linear in mobility.
  DeviceParams p2 = p;
  p2.mu *= 3.0;
  CHECK(channel_current_gca(1.0, 12.0, p2) == doctest::Approx(3.0 * channel_current_gca(1.0, 12.0, p)).epsilon(1e-12));

  double prev = 0.0;
  for (double v = -5.9; v <= 49.9; v += 1.8) {
    const double i = channel_current_gca(1.0, v, p);
    CHECK(i >= prev);
    prev = i;
  }
}

TEST_CASE("channel current against a brute-force potential integral") {
  const PhysicalConstants c;
  const DeviceParams p = mid_point();
  for (double vgs : {2.0, 15.0}) {
    const double vds = 1.0;
    // Trapezoid over the local overdrive with an independent surface solve.
    const double integral = trapezoid([&](double v) {
      return free_carrier_density(solve_surface_ef(vgs - v, p).ef, p);
    }, 0.0, vds, 4000);
    const double oracle = p.mu * c.q / c.l_ch * 100.0 * integral;
    CHECK(std::abs(channel_current_gca(vds, vgs, p) / oracle - 1.0) < 1e-6);
  }
}

TEST_CASE("series circuit against an independent root finder") {
  const PhysicalConstants c;
  const DeviceParams p = mid_point();
  for (double vgs : {-2.0, 5.0, 30.0}) {
    for (double vds : {0.1, 1.0}) {
      const double r = 2.0 * contact_resistance(vgs, p, c) * 1e-6;
      // Bisection on I in [0, I_ch(vds)] of I - I_ch(vds - R I).
      double lo = 0.0, hi = channel_current_gca(vds, vgs, p);
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double x = std::max(0.0, vds - r * mid);
        (mid - channel_current_gca(x, vgs, p) < 0.0 ? lo : hi) = mid;
      }
      const double oracle = std::max(0.5 * (lo + hi), kCurrentClamp);
      CHECK(simulate_id(vgs, vds, p) == doctest::Approx(oracle).epsilon(1e-8));
    }
  }
}

TEST_CASE("series circuit regimes") {
  PhysicalConstants open_contacts;
  open_contacts.rho_c0 = 0.0;
  const DeviceParams p = mid_point();
  CHECK(simulate_id(10.0, 1.0, p, open_contacts) == doctest::Approx(channel_current_gca(1.0, 10.0, p)).epsilon(1e-10));

  DeviceParams fast = p;
  fast.mu *= 2.0;
  // Negligible contacts: current doubles.
  const double ratio_channel = simulate_id(20.0, 0.1, fast, open_contacts) / simulate_id(20.0, 0.1, p, open_contacts);
  CHECK(std::abs(ratio_channel - 2.0) < 2e-3);
  // Contact dominated: current barely moves.
  DeviceParams blocked = p;
  blocked.phi_b0 = 0.51;
  DeviceParams blocked_fast = blocked;
  blocked_fast.mu *= 2.0;
  PhysicalConstants heavy;
  heavy.rho_c0 = 1e4;
  const double ratio_contact = simulate_id(20.0, 0.1, blocked_fast, heavy) / simulate_id(20.0, 0.1, blocked, heavy);
  CHECK(std::abs(ratio_contact - 1.0) < 1e-2);

  CHECK_THROWS_AS(simulate_id(0.0, 0.0, p), ContractError);
}

TEST_CASE("one-parameter sweeps are monotone") {
  const auto bases = sample_devices(3, 404);
  const BiasSpec b = BiasSpec::standard();
  auto sweep = [&](const DeviceParams& base, double DeviceParams::*field, double lo, double hi, int sign) {
    std::vector<IVCurveSet> curves;
    for (int k = 0; k < 5; ++k) {
      DeviceParams q = base;
      q.*field = lo + (hi - lo) * k / 4.0;
      curves.push_back(simulate_curves(q, b));
    }
    for (std::size_t k = 1; k < curves.size(); ++k) {
      for (std::size_t i = 0; i < curves[k].id.size(); ++i) {
        const double prev = curves[k - 1].id[i], cur = curves[k].id[i];
        // Relative slack for quadrature noise at the 1e-10 level.
        if (sign > 0) CHECK(cur >= prev * (1.0 - 1e-9));
        else CHECK(cur <= prev * (1.0 + 1e-9));
      }
    }
  };
  const auto r = default_ranges();
  for (const auto& base : bases) {
    sweep(base, &DeviceParams::phi_b0, r[1].lower, r[1].upper, -1);
    sweep(base, &DeviceParams::n_a0, r[6].lower, r[6].upper, -1);
    sweep(base, &DeviceParams::n_d0, r[3].lower, r[3].upper, +1);
    sweep(base, &DeviceParams::mu, r[0].lower, r[0].upper, +1);
  }
}

TEST_CASE("curve invariants over 1000 sampled devices") {
  DatasetSpec spec;
  spec.count = 1000;
  spec.master_seed = 9;
  const GeneratedDataset ds = generate_dataset(spec);
  CHECK(ds.failures.empty());
  std::size_t wide = 0;
  for (const auto& d : ds.devices) {
    const auto& cv = d.curves;
    double mx = 0.0, mn = 1e300;
    for (std::size_t i = 0; i < cv.vds.size(); ++i) {
      for (std::size_t j = 0; j < cv.vgs.size(); ++j) {
        const double id = cv.at(i, j);
        REQUIRE(std::isfinite(id));
        REQUIRE(id > 0.0);
        if (j > 0) REQUIRE(id >= cv.at(i, j - 1));
        mx = std::max(mx, id);
        mn = std::min(mn, id);
      }
    }
    for (std::size_t j = 0; j < cv.vgs.size(); ++j) REQUIRE(cv.at(1, j) >= cv.at(0, j));
    if (mx / std::max(mn, 5e-5) > 1e3) ++wide;
  }
  CHECK(static_cast<double>(wide) >= 0.9 * static_cast<double>(ds.devices.size()));
}

TEST_CASE("simulate_curves determinism and error tagging") {
  const DeviceParams p = mid_point();
  const IVCurveSet a = simulate_curves(p), b = simulate_curves(p);
  CHECK(a.id == b.id);
  REQUIRE(a.id.size() == 64);

  DeviceParams bad = p;
  bad.n_c = 1e3;
  BiasSpec huge;
  huge.vgs_grid = {0.0, 1e4};
  huge.vds_values = {0.1};
  try {
    simulate_curves(bad, huge);
    FAIL("expected a model-domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::model_domain);
    CHECK(std::string(e.what()).find("vgs=") != std::string::npos);
  }
}

TEST_CASE("bias grid") {
  const BiasSpec b = BiasSpec::standard();
  REQUIRE(b.vgs_grid.size() == 32);
  CHECK(b.vgs_grid.front() == -5.9);
  CHECK(b.vgs_grid.back() == 49.9);
  for (std::size_t i = 1; i < 32; ++i) CHECK(b.vgs_grid[i] - b.vgs_grid[i - 1] == doctest::Approx(1.8));
  CHECK(b.vds_values == std::vector<double>{0.1, 1.0});
}

TEST_CASE("sampler") {
  const ParamRanges r = default_ranges();
  CHECK(sample_params(r, 42) == sample_params(r, 42));
  CHECK_FALSE(sample_params(r, 42) == sample_params(r, 43));

  double mn = 1e9, mx = -1e9, sum = 0.0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const DeviceParams p = sample_params(r, s);
    const auto v = p.to_array();
    for (std::size_t k = 0; k < kNumParams; ++k) {
      CHECK(v[k] >= r[k].lower);
      CHECK(v[k] <= r[k].upper);
      CHECK(v[k] > 0.0);
    }
    mn = std::min(mn, p.mu);
    mx = std::max(mx, p.mu);
    sum += p.mu;
  }
  CHECK(mn >= 1.0);
  CHECK(mx <= 35.0);
  CHECK(sum / 10000 >= 16.5);
  CHECK(sum / 10000 <= 19.5);

  ParamRanges degenerate = r;
  degenerate[0] = {7.0, 7.0, false};
  for (std::uint64_t s = 0; s < 10; ++s) CHECK(sample_params(degenerate, s).mu == 7.0);

  ParamRanges inverted = r;
  inverted[2] = {1.0, 0.5, false};
  CHECK_THROWS_AS(sample_params(inverted, 1), ConfigError);
}

TEST_CASE("dataset csv round trip and worker independence") {
  DatasetSpec spec;
  spec.count = 6;
  spec.master_seed = 123;
  spec.workers = 1;
  const auto one = generate_dataset(spec);
  spec.workers = 3;
  const auto three = generate_dataset(spec);
  std::ostringstream a, b;
  write_dataset_csv(a, one.devices);
  write_dataset_csv(b, three.devices);
  CHECK(a.str() == b.str());

  std::istringstream in(a.str());
  const auto back = read_dataset_csv(in);
  REQUIRE(back.size() == one.devices.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].device_id == one.devices[i].device_id);
    CHECK(back[i].seed == one.devices[i].seed);
    CHECK(back[i].params() == one.devices[i].params());
    CHECK(back[i].curves.id == one.devices[i].curves.id);
    CHECK(back[i].curves.vgs == one.devices[i].curves.vgs);
  }

  std::istringstream bad("device_id,seed\n1,2\n");
  CHECK_THROWS_AS(read_dataset_csv(bad), InputError);
  std::istringstream short_row(a.str().substr(0, a.str().find('\n') + 1) + "1,2,3\n");
  CHECK_THROWS_AS(read_dataset_csv(short_row), InputError);
}
