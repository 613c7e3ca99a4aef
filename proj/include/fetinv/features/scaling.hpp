// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace fetinv::features {

/// Per-slice min-max affine map onto [-1, 1]:
///   x~ = 2 (x - min) / (max - min) - 1.
/// A "slice" is one feature column (or one parameter); data are laid out
/// with the slice index varying fastest, so element i belongs to slice
/// i % slices(). Values outside the fitted range are mapped without
/// clamping.
class ScalingRecord {
 public:
  ScalingRecord() = default;
  ScalingRecord(std::vector<double> min, std::vector<double> max);

  /// Fit over `count` consecutive elements. Throws ConfigError naming the
  /// slice when a slice has fewer than two distinct values.
  static ScalingRecord fit(const double* data, std::size_t count, std::size_t slices,
                           const std::vector<std::string>& slice_names = {});
  static ScalingRecord fit(const std::vector<double>& data, std::size_t slices,
                           const std::vector<std::string>& slice_names = {});

  std::size_t slices() const noexcept { return min_.size(); }
  const std::vector<double>& min() const noexcept { return min_; }
  const std::vector<double>& max() const noexcept { return max_; }

  double apply(double x, std::size_t slice) const noexcept {
    return 2.0 * (x - min_[slice]) / (max_[slice] - min_[slice]) - 1.0;
  }
  double invert(double y, std::size_t slice) const noexcept {
    return (y + 1.0) * 0.5 * (max_[slice] - min_[slice]) + min_[slice];
  }

  /// In-place over `count` elements, slice = index % slices().
  void apply(double* data, std::size_t count) const;
  void invert(double* data, std::size_t count) const;

  /// Restrict to a subset of slices, in the given order.
  ScalingRecord subset(const std::vector<std::size_t>& slices) const;

  nlohmann::json to_json() const;
  static ScalingRecord from_json(const nlohmann::json& j);

  bool operator==(const ScalingRecord&) const = default;

 private:
  std::vector<double> min_;
  std::vector<double> max_;
};

}  // namespace fetinv::features
