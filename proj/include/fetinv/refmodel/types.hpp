// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace fetinv::refmodel {

inline constexpr std::size_t kNumParams = 8;

/// Fitting parameters of the back-gated 2D Schottky-barrier FET.
struct DeviceParams {
  double mu = 10.0;         ///< electron mobility, cm^2/(V s)
  double phi_b0 = 0.2;      ///< nominal Schottky barrier height, eV
  double n_c = 1e12;        ///< effective conduction-band density of states, cm^-2
  double n_d0 = 1e13;       ///< peak donor density, 1/(eV cm^2)
  double e_d_mid = 0.1;     ///< donor Gaussian centre below E_C, eV
  double sigma_d = 0.07;    ///< donor Gaussian width, eV
  double n_a0 = 5e12;       ///< peak acceptor band-tail density, 1/(eV cm^2)
  double sigma_a = 0.1;     ///< acceptor tail decay energy, eV

  std::array<double, kNumParams> to_array() const noexcept;
  static DeviceParams from_array(const std::array<double, kNumParams>& v) noexcept;

  bool operator==(const DeviceParams&) const = default;
};

/// Column names, in DeviceParams field order.
inline constexpr std::array<std::string_view, kNumParams> kParamNames = {
    "mu", "phi_b0", "n_c", "n_d0", "e_d_mid", "sigma_d", "n_a0", "sigma_a"};

struct ParamRange {
  double lower = 0.0;
  double upper = 0.0;
  bool log_space = false;  ///< sample log-uniformly instead of uniformly

  double width() const noexcept { return upper - lower; }
};

using ParamRanges = std::array<ParamRange, kNumParams>;

/// Default sampling ranges of the eight parameters.
ParamRanges default_ranges() noexcept;

/// Throws ConfigError if any range is inverted, non-finite, or non-positive.
void validate_ranges(const ParamRanges& ranges);

struct PhysicalConstants {
  double k_b_t = 0.025852;              ///< thermal energy at 300 K, eV
  double q = 1.602176634e-19;           ///< elementary charge, C
  double c_ox = 3.9 * 8.8541878128e-14 / 100e-7;  ///< 100 nm SiO2, F/cm^2
  double l_ch = 500e-7;                 ///< channel length, cm
  double v_fb = 0.0;                    ///< flat-band offset, V
  double rho_c0 = 0.01;                 ///< contact resistivity prefactor, Ohm um
  double n_floor = 1.0;                 ///< carrier floor in the contact term, cm^-2
  double e_min = -1.5;                  ///< lower edge of the trap-state window, eV
  double ef_lo = -2.0;                  ///< surface Fermi-level bracket, eV
  double ef_hi = 2.0;

  void validate() const;
};

struct BiasSpec {
  std::vector<double> vgs_grid;
  std::vector<double> vds_values;

  /// 32 evenly spaced gate biases on [-5.9, 49.9] V and drain biases {0.1, 1.0} V.
  static BiasSpec standard();

  std::size_t n_vgs() const noexcept { return vgs_grid.size(); }
  std::size_t n_vds() const noexcept { return vds_values.size(); }

  void validate() const;
};

/// Drain current over a bias grid, row-major [vds index][vgs index].
struct IVCurveSet {
  std::vector<double> vds;
  std::vector<double> vgs;
  std::vector<double> id;  ///< uA/um
  std::optional<DeviceParams> params;

  double at(std::size_t ivds, std::size_t ivgs) const { return id[ivds * vgs.size() + ivgs]; }
  double& at(std::size_t ivds, std::size_t ivgs) { return id[ivds * vgs.size() + ivgs]; }
};

}  // namespace fetinv::refmodel
