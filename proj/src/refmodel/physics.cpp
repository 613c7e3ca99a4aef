// SPDX-License-Identifier: Apache-2.0
#include "fetinv/refmodel/physics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "fetinv/error.hpp"
#include "fetinv/simd/kernels.hpp"

namespace fetinv::refmodel {
namespace {

// ln(1 + e^x) without overflow.
double softplus(double x) noexcept {
  if (x > 35.0) return x + std::exp(-x);
  return std::log1p(std::exp(x));
}

double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double fermi(double x_over_kt) noexcept { return logistic(-x_over_kt); }

// Occupancy integral over [e_min, 0] with a composite Gauss-Legendre rule,
// doubling the panel count until two levels agree.
template <typename Integrand>
double adaptive_window_integral(double e_min, Integrand&& f, const char* what) {
  constexpr double kRelTol = 1e-10;
  constexpr std::size_t kStartPanels = 32;
  constexpr int kMaxLevels = 9;
  auto eval = [&](std::size_t panels) {
    const auto rule = QuadratureRule::gauss_legendre(e_min, 0.0, panels, 4);
    double sum = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) sum += rule.weights[k] * f(rule.nodes[k]);
    return sum;
  };
  std::size_t panels = kStartPanels;
  double coarse = eval(panels);
  double diff = 0.0;
  for (int level = 0; level < kMaxLevels; ++level) {
    panels *= 2;
    const double fine = eval(panels);
    diff = std::abs(fine - coarse);
    if (diff <= kRelTol * std::abs(fine) || diff == 0.0) return fine;
    coarse = fine;
  }
  throw NumericalError(std::string(what) + ": quadrature did not converge under panel halving", diff);
}

}  // namespace

std::array<double, kNumParams> DeviceParams::to_array() const noexcept {
  return {mu, phi_b0, n_c, n_d0, e_d_mid, sigma_d, n_a0, sigma_a};
}

DeviceParams DeviceParams::from_array(const std::array<double, kNumParams>& v) noexcept {
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
}

ParamRanges default_ranges() noexcept {
  return {{
      {1.0, 35.0, false},
      {0.010, 0.510, false},
      {2e11, 9e12, false},
      {3e12, 3e13, false},
      {0.020, 0.200, false},
      {0.020, 0.200, false},
      {6e11, 3.7e13, false},
      {0.050, 0.300, false},
  }};
}

void validate_ranges(const ParamRanges& ranges) {
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const auto& r = ranges[i];
    if (!std::isfinite(r.lower) || !std::isfinite(r.upper) || r.lower > r.upper || r.lower <= 0.0) {
      std::ostringstream os;
      os << "invalid range for " << kParamNames[i] << ": [" << r.lower << ", " << r.upper << "]";
      throw ConfigError(os.str());
    }
  }
}

void PhysicalConstants::validate() const {
  if (!(k_b_t > 0.0) || !(q > 0.0) || !(c_ox > 0.0) || !(l_ch > 0.0))
    throw ConfigError("physical constants k_b_t, q, c_ox and l_ch must be positive");
  if (!(rho_c0 >= 0.0) || !(n_floor > 0.0)) throw ConfigError("rho_c0 must be >= 0 and n_floor > 0");
  if (!(e_min < 0.0) || !(ef_lo < ef_hi)) throw ConfigError("invalid energy window or Fermi bracket");
}

BiasSpec BiasSpec::standard() {
  BiasSpec b;
  constexpr std::size_t n = 32;
  constexpr double first = -5.9;
  constexpr double last = 49.9;
  b.vgs_grid.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    b.vgs_grid[i] = first + (last - first) * static_cast<double>(i) / static_cast<double>(n - 1);
  b.vgs_grid.back() = last;
  b.vds_values = {0.1, 1.0};
  return b;
}

void BiasSpec::validate() const {
  if (vgs_grid.size() < 3) throw ConfigError("bias grid needs at least 3 gate voltages");
  for (std::size_t i = 1; i < vgs_grid.size(); ++i)
    if (!(vgs_grid[i] > vgs_grid[i - 1])) throw ConfigError("gate voltages must be strictly increasing");
  if (vds_values.empty()) throw ConfigError("at least one drain bias is required");
  for (double v : vds_values)
    if (!(v > 0.0)) throw ConfigError("drain biases must be positive");
}

QuadratureRule QuadratureRule::gauss_legendre(double a, double b, std::size_t panels, std::size_t order) {
  // Legendre roots by Newton iteration on P_n.
  std::vector<double> x(order), w(order);
  for (std::size_t i = 0; i < order; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(order) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (std::size_t j = 1; j <= order; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / static_cast<double>(j);
      }
      dp = static_cast<double>(order) * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  QuadratureRule rule;
  rule.nodes.reserve(panels * order);
  rule.weights.reserve(panels * order);
  const double h = (b - a) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double mid = a + (static_cast<double>(p) + 0.5) * h;
    for (std::size_t i = 0; i < order; ++i) {
      rule.nodes.push_back(mid + 0.5 * h * x[i]);
      rule.weights.push_back(0.5 * h * w[i]);
    }
  }
  return rule;
}

double donor_density(double e, const DeviceParams& p) noexcept {
  if (e >= 0.0) return 0.0;
  const double d = e + p.e_d_mid;
  return p.n_d0 * std::exp(-d * d / (2.0 * p.sigma_d * p.sigma_d));
}

double acceptor_density(double e, const DeviceParams& p) noexcept {
  if (e >= 0.0) return 0.0;
  return p.n_a0 * std::exp(-std::abs(e) / p.sigma_a);
}

double free_carrier_density(double ef, const DeviceParams& p, const PhysicalConstants& c) noexcept {
  return p.n_c * softplus(ef / c.k_b_t);
}

double trapped_acceptor_charge(double ef, const DeviceParams& p, const PhysicalConstants& c) {
  if (p.n_a0 == 0.0) return 0.0;
  return adaptive_window_integral(
      c.e_min, [&](double e) { return acceptor_density(e, p) * fermi((e - ef) / c.k_b_t); },
      "trapped_acceptor_charge");
}

double ionized_donor_charge(double ef, const DeviceParams& p, const PhysicalConstants& c) {
  if (p.n_d0 == 0.0) return 0.0;
  return adaptive_window_integral(
      c.e_min, [&](double e) { return donor_density(e, p) * (1.0 - fermi((e - ef) / c.k_b_t)); },
      "ionized_donor_charge");
}

// ---------------------------------------------------------------------------

DeviceModel::DeviceModel(const DeviceParams& p, const PhysicalConstants& c) : p_(p), c_(c) {
  const auto rule = QuadratureRule::gauss_legendre(c_.e_min, 0.0, kPanels, 4);
  const std::size_t n = rule.nodes.size();
  boltz_.resize(n);
  acc_w_.resize(n);
  don_w_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double e = rule.nodes[k];
    boltz_[k] = std::exp(e / c_.k_b_t);
    acc_w_[k] = rule.weights[k] * acceptor_density(e, p_);
    don_w_[k] = rule.weights[k] * donor_density(e, p_);
  }
}

ChargeState DeviceModel::charge(double ef) const {
  const double x = ef / c_.k_b_t;
  const auto sums =
      simd::kernels().occupancy(boltz_.data(), acc_w_.data(), don_w_.data(), boltz_.size(), std::exp(-x));
  ChargeState st;
  st.free = p_.n_c * softplus(x);
  st.d_free = p_.n_c * logistic(x) / c_.k_b_t;
  st.trapped = sums.occupied;
  st.ionized = sums.empty;
  st.d_trapped = sums.d_occupied / c_.k_b_t;
  st.d_ionized = -sums.d_empty / c_.k_b_t;
  return st;
}

double DeviceModel::induced_density(double vgs) const noexcept {
  return c_.c_ox * (vgs - c_.v_fb) / c_.q;
}

SurfaceSolution DeviceModel::solve_surface(double vgs, double guess) const {
  if (!std::isfinite(vgs)) throw InputError("solve_surface_ef: gate voltage must be finite");
  const double lhs = induced_density(vgs);
  double lo = c_.ef_lo;
  double hi = c_.ef_hi;
  bool lo_known = false;
  bool hi_known = false;

  auto balance = [&](double ef, double& g, double& dg, double& scale) {
    const ChargeState st = charge(ef);
    g = lhs - (st.free + st.trapped - st.ionized);
    dg = -(st.d_free + st.d_trapped - st.d_ionized);
    scale = std::max({1.0, std::abs(lhs), st.free, st.trapped, st.ionized});
  };

  double x = (guess > lo && guess < hi) ? guess : 0.5 * (lo + hi);
  SurfaceSolution sol;
  for (int it = 1; it <= 200; ++it) {
    double g, dg, scale;
    balance(x, g, dg, scale);
    sol.iterations = it;
    sol.ef = x;
    sol.residual = std::abs(g) / scale;
    if (g < 0.0 && !lo_known) {
      // Settle depletion before accepting a root: with the unit floor in
      // `scale`, a vanishing density would otherwise pass as converged.
      double gl, dgl, sl;
      balance(c_.ef_lo, gl, dgl, sl);
      if (gl < 0.0) {
        sol.ef = c_.ef_lo;
        sol.depleted = true;
        sol.residual = std::abs(gl) / sl;
        return sol;
      }
      lo_known = true;
    }
    if (sol.residual <= 1e-13) return sol;
    if (g > 0.0) {
      lo = x;
      lo_known = true;
    } else {
      hi = x;
      hi_known = true;
    }
    double next = x - g / dg;
    if (!(next > lo && next < hi)) {
      if (g > 0.0 && !hi_known) {
        double gh, dgh, sh;
        balance(c_.ef_hi, gh, dgh, sh);
        if (gh > 0.0) {
          std::ostringstream os;
          os << "solve_surface_ef: no sign change up to ef = " << c_.ef_hi << " eV at vgs = " << vgs;
          throw ModelDomainError(os.str());
        }
        hi_known = true;
      }
      if (g < 0.0 && !lo_known) {
        double gl, dgl, sl;
        balance(c_.ef_lo, gl, dgl, sl);
        if (gl < 0.0) {
          sol.ef = c_.ef_lo;
          sol.depleted = true;
          sol.residual = std::abs(gl) / sl;
          return sol;
        }
        lo_known = true;
      }
      next = 0.5 * (lo + hi);
    }
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) {
      sol.ef = next;
      return sol;
    }
    x = next;
  }
  throw NumericalError("solve_surface_ef: root finder did not converge", sol.residual);
}

double DeviceModel::free_density_at(double vgs, double* ef_hint) const {
  const auto sol = solve_surface(vgs, ef_hint ? *ef_hint : 0.0);
  if (ef_hint) *ef_hint = sol.ef;
  return p_.n_c * softplus(sol.ef / c_.k_b_t);
}

double DeviceModel::contact_resistance(double vgs) const {
  const double n = free_density_at(vgs);
  return c_.rho_c0 * std::exp(p_.phi_b0 / c_.k_b_t) * p_.n_c / std::max(n, c_.n_floor);
}

double DeviceModel::channel_prefactor() const noexcept {
  // mu q / L in A/cm per (cm^-2 V); 1 A/cm = 100 uA/um.
  return p_.mu * c_.q / c_.l_ch * 100.0;
}

double DeviceModel::gate_voltage_of(double ef) const {
  const ChargeState st = charge(ef);
  return c_.v_fb + c_.q / c_.c_ox * (st.free + st.trapped - st.ionized);
}

double DeviceModel::channel_current(double vds_int, double vgs, double* drain_density) const {
  if (vds_int < 0.0 || !std::isfinite(vds_int))
    throw ContractError("channel_current_gca: internal drain drop must be >= 0");
  const SurfaceSolution src = solve_surface(vgs);
  if (vds_int == 0.0) {
    if (drain_density) *drain_density = p_.n_c * softplus(src.ef / c_.k_b_t);
    return 0.0;
  }
  const SurfaceSolution drn = solve_surface(vgs - vds_int, src.ef);
  const double n_floor_state = p_.n_c * softplus(c_.ef_lo / c_.k_b_t);
  if (drain_density) *drain_density = p_.n_c * softplus(drn.ef / c_.k_b_t);
  if (src.depleted) return channel_prefactor() * n_floor_state * vds_int;

  // The integral of n over the local gate overdrive V is evaluated in the
  // Fermi-level variable, int n(ef) dV/def def, where the integrand is smooth.
  // Any depleted stretch at the drain end contributes n(ef_lo) per volt.
  double depleted_span = 0.0;
  if (drn.depleted) depleted_span = std::max(0.0, gate_voltage_of(c_.ef_lo) - (vgs - vds_int));
  const double lower = drn.ef;
  const double upper = src.ef;

  const double dv_scale = c_.q / c_.c_ox;
  auto integrand = [&](double ef) {
    const ChargeState st = charge(ef);
    return st.free * dv_scale * (st.d_free + st.d_trapped - st.d_ionized);
  };

  // Composite 4-point Gauss-Legendre, panel count doubled until two levels
  // agree. The integrand varies on the kT scale, so Simpson stalls near its
  // round-off floor before reaching the tolerance.
  constexpr std::size_t kMinPanels = 16;
  constexpr std::size_t kMaxPanels = 8192;
  constexpr double kRelTol = 1e-10;
  static constexpr double kX[4] = {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563,
                                   0.8611363115940526};
  static constexpr double kW[4] = {0.3478548451374538, 0.6521451548625461, 0.6521451548625461,
                                   0.3478548451374538};

  const double span = upper - lower;
  double integral = 0.0;
  if (span > 0.0) {
    auto composite = [&](std::size_t panels) {
      const double h = span / static_cast<double>(panels);
      double s = 0.0;
      for (std::size_t i = 0; i < panels; ++i) {
        const double mid = lower + (static_cast<double>(i) + 0.5) * h;
        for (int k = 0; k < 4; ++k) s += kW[k] * integrand(mid + 0.5 * h * kX[k]);
      }
      return 0.5 * h * s;
    };
    std::size_t panels = kMinPanels;
    double coarse = composite(panels);
    double fine = composite(2 * panels);
    // Absolute floor: differences below the reported current clamp are noise.
    const double abs_tol = 1e-3 * kCurrentClamp / channel_prefactor();
    while (std::abs(fine - coarse) > kRelTol * std::abs(fine) + abs_tol) {
      panels *= 2;
      if (2 * panels > kMaxPanels)
        throw NumericalError("channel_current_gca: quadrature refinement did not converge",
                             std::abs(fine - coarse) / std::max(std::abs(fine), 1e-300));
      coarse = fine;
      fine = composite(2 * panels);
    }
    integral = fine;
  }
  return channel_prefactor() * (integral + n_floor_state * depleted_span);
}

double DeviceModel::drain_current(double vgs, double vds) const {
  if (!(vds > 0.0) || !std::isfinite(vds)) throw ContractError("simulate_id: vds must be positive");
  // Both contacts are gated by the gate-source bias; volts per (uA/um).
  const double r_series = 2.0 * contact_resistance(vgs) * 1e-6;
  const double g0 = channel_prefactor() * free_density_at(vgs);

  // phi(x) = x + R I_ch(x) - vds over the internal drop x in [0, vds];
  // phi is increasing, so a bracketed Newton iteration is safe.
  double lo = 0.0;
  double hi = vds;
  double x = vds / (1.0 + r_series * g0);
  double current = 0.0;
  double residual = 0.0;
  for (int it = 0; it < 200; ++it) {
    double nd = 0.0;
    const double next_current = channel_current(x, vgs, &nd);
    const double phi = x + r_series * next_current - vds;
    residual = std::abs(phi) / vds;
    const double change = std::abs(next_current - current);
    current = next_current;
    if (residual <= 1e-14 || (it > 0 && change <= 1e-12 * current)) {
      return std::max(current, kCurrentClamp);
    }
    if (phi > 0.0) hi = x; else lo = x;
    const double dphi = 1.0 + r_series * channel_prefactor() * nd;
    double next = x - phi / dphi;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x) return std::max(current, kCurrentClamp);
    x = next;
  }
  throw NumericalError("simulate_id: series-circuit solve did not converge in 200 iterations", residual);
}

// ---------------------------------------------------------------------------

SurfaceSolution solve_surface_ef(double vgs, const DeviceParams& p, const PhysicalConstants& c) {
  return DeviceModel(p, c).solve_surface(vgs);
}

double contact_resistance(double vgs, const DeviceParams& p, const PhysicalConstants& c) {
  return DeviceModel(p, c).contact_resistance(vgs);
}

double channel_current_gca(double vds_int, double vgs, const DeviceParams& p, const PhysicalConstants& c) {
  return DeviceModel(p, c).channel_current(vds_int, vgs);
}

double simulate_id(double vgs, double vds, const DeviceParams& p, const PhysicalConstants& c) {
  return DeviceModel(p, c).drain_current(vgs, vds);
}

IVCurveSet simulate_curves(const DeviceParams& p, const BiasSpec& b, const PhysicalConstants& c) {
  const DeviceModel model(p, c);
  IVCurveSet out;
  out.vds = b.vds_values;
  out.vgs = b.vgs_grid;
  out.id.resize(b.n_vds() * b.n_vgs());
  out.params = p;
  for (std::size_t i = 0; i < b.n_vds(); ++i) {
    for (std::size_t j = 0; j < b.n_vgs(); ++j) {
      try {
        out.at(i, j) = model.drain_current(b.vgs_grid[j], b.vds_values[i]);
      } catch (const Error& e) {
        std::ostringstream os;
        os << e.what() << " [vds=" << b.vds_values[i] << " V, vgs=" << b.vgs_grid[j] << " V]";
        throw Error(e.kind(), os.str());
      }
    }
  }
  return out;
}

}  // namespace fetinv::refmodel
