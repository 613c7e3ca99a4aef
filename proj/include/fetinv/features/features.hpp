// SPDX-License-Identifier: Apache-2.0
#pragma once

// Curve preprocessing: grid interpolation, noise floor, the 32x8 feature
// matrix and its scaled form. Each container carries the last pipeline
// stage applied to it and every step checks that tag, so the fixed order
// interpolate -> floor -> engineer -> scale cannot be broken silently.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fetinv/features/scaling.hpp"
#include "fetinv/refmodel/types.hpp"

namespace fetinv::features {

inline constexpr double kNoiseFloor = 5e-5;  ///< uA/um
inline constexpr std::size_t kFeatureColumns = 8;
inline constexpr std::size_t kCurveChannels = 4;

/// Column order of the feature matrix.
enum Column : std::size_t {
  kId0 = 0,
  kId1 = 1,
  kLog0 = 2,
  kLog1 = 3,
  kDId0 = 4,
  kDId1 = 5,
  kDLog0 = 6,
  kDLog1 = 7,
};

extern const std::array<const char*, kFeatureColumns> kColumnNames;

enum class Stage { raw, interpolated, floored, engineered, scaled };
const char* to_string(Stage s) noexcept;

struct RawCurve {
  double vds = 0.0;
  std::vector<double> vgs;  ///< strictly increasing
  std::vector<double> id;   ///< uA/um, > 0

  void validate() const;
};

/// One device's currents on the fixed grid, row-major [vds][vgs]. `linear`
/// holds values interpolated in linear space and `logspace` values
/// interpolated in log10 space (both as currents).
struct GridCurves {
  Stage stage = Stage::raw;
  std::vector<double> vds;
  std::vector<double> vgs;
  std::vector<double> linear;
  std::vector<double> logspace;
};

/// Per-device 32x8 matrix, row-major [vgs][column].
struct FeatureTensor {
  Stage stage = Stage::raw;
  std::size_t rows = 0;
  std::vector<double> u;

  double at(std::size_t r, std::size_t c) const { return u[r * kFeatureColumns + c]; }
  /// First four columns as a rows x 4 matrix.
  std::vector<double> v() const;
};

struct Interpolated {
  std::vector<double> linear;
  std::vector<double> logspace;
};

/// Linear and log10-linear interpolation onto `grid`. Throws InputError for
/// any grid point outside the curve's span.
Interpolated interpolate_to_grid(const RawCurve& curve, const std::vector<double>& grid);

/// max(id, kNoiseFloor); InputError for nonpositive or non-finite input.
double apply_noise_floor(double id);
void apply_noise_floor(GridCurves& g);

std::vector<double> first_difference(const std::vector<double>& x);
std::vector<double> second_difference(const std::vector<double>& x);

/// Derivative on a (possibly nonuniform) grid: central differences inside,
/// one-sided at the ends, per volt.
std::vector<double> grid_derivative(const std::vector<double>& y, const std::vector<double>& x);

/// One curve per required vds, matched to bias.vds_values within 1e-9 V.
GridCurves interpolate_curves(const std::vector<RawCurve>& curves, const refmodel::BiasSpec& bias);

/// Curves already on the grid (simulator output).
GridCurves grid_curves(const refmodel::IVCurveSet& curves);

/// Requires two vds values (low, high) and a floored stage.
FeatureTensor engineer_features(const GridCurves& g);

/// interpolate -> floor -> engineer.
FeatureTensor build_feature_matrix(const std::vector<RawCurve>& curves, const refmodel::BiasSpec& bias);
FeatureTensor build_feature_matrix(const refmodel::IVCurveSet& curves);

/// Column-wise scaling of an engineered tensor.
FeatureTensor scale_features(const FeatureTensor& t, const ScalingRecord& rec);
FeatureTensor unscale_features(const FeatureTensor& t, const ScalingRecord& rec);

/// Zero the masked columns of a scaled tensor.
FeatureTensor ablate_features(const FeatureTensor& t, const std::vector<std::size_t>& mask);
/// Same on a flat stack of scaled matrices (count x rows x 8).
void ablate_columns(std::vector<double>& stack, const std::vector<std::size_t>& mask);

/// Measured data: columns device_id,vds,vgs,id_uA_per_um. Rows may come in
/// any order; each (device, vds) group becomes one curve sorted by vgs.
std::map<std::string, std::vector<RawCurve>> read_measured_csv(std::istream& is);
std::map<std::string, std::vector<RawCurve>> read_measured_csv(const std::string& path);

}  // namespace fetinv::features
