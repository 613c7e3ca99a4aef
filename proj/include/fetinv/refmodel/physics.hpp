// SPDX-License-Identifier: Apache-2.0
#pragma once

// Compact model of a back-gated monolayer FET with Schottky contacts:
//   * electrostatic charge balance between the gate and the sheet charge
//     (free electrons, band-tail acceptors, Gaussian donors) fixes the
//     surface Fermi level ef(V) relative to E_C;
//   * gradual-channel integration of the free sheet density gives the
//     channel current;
//   * a thermionic contact resistance per contact, modulated by the gate
//     through the local carrier density, is solved in series with it.
// All energies are in eV relative to E_C, densities in cm^-2 or
// 1/(eV cm^2), currents in uA/um.

#include <cstddef>
#include <vector>

#include "fetinv/refmodel/types.hpp"

namespace fetinv::refmodel {

/// Truncated Gaussian donor profile; zero at and above E_C.
double donor_density(double e, const DeviceParams& p) noexcept;

/// Exponential acceptor band tail; zero at and above E_C.
double acceptor_density(double e, const DeviceParams& p) noexcept;

/// Two-dimensional Fermi integral n_c * ln(1 + exp(ef / kT)).
double free_carrier_density(double ef, const DeviceParams& p, const PhysicalConstants& c = {}) noexcept;

/// Electrons trapped in band-tail acceptors, integrated over [e_min, 0].
/// Uses composite Gauss-Legendre panels, halved until two successive levels
/// agree to 1e-10 relative; throws NumericalError otherwise.
double trapped_acceptor_charge(double ef, const DeviceParams& p, const PhysicalConstants& c = {});

/// Positively charged (empty) donors integrated over [e_min, 0].
double ionized_donor_charge(double ef, const DeviceParams& p, const PhysicalConstants& c = {});

struct SurfaceSolution {
  double ef = 0.0;
  bool depleted = false;  ///< root lies below the bracket floor; ef is clamped to it
  double residual = 0.0;  ///< |g(ef)| / max(1, |terms|)
  int iterations = 0;
};

/// Root of c_ox (vgs - v_fb) / q = n(ef) + acceptor(ef) - donor(ef).
/// Throws ModelDomainError when the root lies above the bracket ceiling.
SurfaceSolution solve_surface_ef(double vgs, const DeviceParams& p, const PhysicalConstants& c = {});

/// Per-contact resistance, Ohm um.
double contact_resistance(double vgs, const DeviceParams& p, const PhysicalConstants& c = {});

/// Gradual-channel current for an internal drain-source drop, uA/um.
double channel_current_gca(double vds_int, double vgs, const DeviceParams& p,
                           const PhysicalConstants& c = {});

/// Drain current with both contacts in series with the channel, uA/um.
double simulate_id(double vgs, double vds, const DeviceParams& p, const PhysicalConstants& c = {});

/// Dense evaluation over the bias grid.
IVCurveSet simulate_curves(const DeviceParams& p, const BiasSpec& b = BiasSpec::standard(),
                           const PhysicalConstants& c = {});

/// Composite Gauss-Legendre rule on [a, b].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  static QuadratureRule gauss_legendre(double a, double b, std::size_t panels, std::size_t order = 4);
};

/// Charge terms and their derivatives with respect to ef.
struct ChargeState {
  double free = 0.0;
  double trapped = 0.0;
  double ionized = 0.0;
  double d_free = 0.0;
  double d_trapped = 0.0;
  double d_ionized = 0.0;  ///< nonpositive
};

/// One device with its trap profile tabulated on a fixed quadrature rule.
/// The free functions above are thin wrappers; batch simulation reuses one
/// instance across the whole bias grid.
class DeviceModel {
 public:
  static constexpr std::size_t kPanels = 96;

  DeviceModel(const DeviceParams& p, const PhysicalConstants& c = {});

  const DeviceParams& params() const noexcept { return p_; }
  const PhysicalConstants& constants() const noexcept { return c_; }

  ChargeState charge(double ef) const;

  /// Gate-induced sheet density c_ox (vgs - v_fb) / q.
  double induced_density(double vgs) const noexcept;

  /// Warm-started root solve; `guess` outside the bracket is ignored.
  SurfaceSolution solve_surface(double vgs, double guess = 0.0) const;

  double free_density_at(double vgs, double* ef_hint = nullptr) const;

  double contact_resistance(double vgs) const;

  /// Channel current and, optionally, the free density at the drain end
  /// (d I / d vds_int divided by the prefactor).
  double channel_current(double vds_int, double vgs, double* drain_density = nullptr) const;

  /// Gate overdrive that places the surface Fermi level at ef (explicit
  /// inverse of the charge balance).
  double gate_voltage_of(double ef) const;

  /// Current prefactor mu q / l_ch expressed in uA/um per (cm^-2 V).
  double channel_prefactor() const noexcept;

  double drain_current(double vgs, double vds) const;

 private:
  DeviceParams p_;
  PhysicalConstants c_;
  std::vector<double> boltz_;   ///< exp(e_k / kT)
  std::vector<double> acc_w_;   ///< w_k N_A(e_k)
  std::vector<double> don_w_;   ///< w_k N_D(e_k)
};

/// Smallest current the model reports, uA/um.
inline constexpr double kCurrentClamp = 1e-12;

}  // namespace fetinv::refmodel
