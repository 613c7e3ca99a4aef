// SPDX-License-Identifier: Apache-2.0
#include "fetinv/features/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fetinv/error.hpp"

namespace fetinv::features {

ScalingRecord::ScalingRecord(std::vector<double> min, std::vector<double> max)
    : min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != max_.size()) throw ContractError("ScalingRecord: min/max length mismatch");
  for (std::size_t i = 0; i < min_.size(); ++i) {
    if (!(max_[i] > min_[i]) || !std::isfinite(min_[i]) || !std::isfinite(max_[i]))
      throw ConfigError("ScalingRecord: slice " + std::to_string(i) + " has max <= min");
  }
}

ScalingRecord ScalingRecord::fit(const double* data, std::size_t count, std::size_t slices,
                                 const std::vector<std::string>& slice_names) {
  if (slices == 0 || count % slices != 0)
    throw ContractError("ScalingRecord::fit: element count is not a multiple of the slice count");
  std::vector<double> lo(slices, std::numeric_limits<double>::infinity());
  std::vector<double> hi(slices, -std::numeric_limits<double>::infinity());
  // Sequential pass: min/max are exact, so the result is order independent.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t s = i % slices;
    if (!std::isfinite(data[i])) throw InputError("ScalingRecord::fit: non-finite value in slice " + std::to_string(s));
    lo[s] = std::min(lo[s], data[i]);
    hi[s] = std::max(hi[s], data[i]);
  }
  for (std::size_t s = 0; s < slices; ++s) {
    if (!(hi[s] > lo[s])) {
      const std::string name = s < slice_names.size() ? slice_names[s] : std::to_string(s);
      throw ConfigError("ScalingRecord::fit: degenerate slice '" + name + "' (max == min)");
    }
  }
  return ScalingRecord(std::move(lo), std::move(hi));
}

ScalingRecord ScalingRecord::fit(const std::vector<double>& data, std::size_t slices,
                                 const std::vector<std::string>& slice_names) {
  return fit(data.data(), data.size(), slices, slice_names);
}

void ScalingRecord::apply(double* data, std::size_t count) const {
  const std::size_t n = slices();
  if (n == 0 || count % n != 0) throw ContractError("ScalingRecord::apply: shape mismatch");
  for (std::size_t i = 0; i < count; ++i) data[i] = apply(data[i], i % n);
}

void ScalingRecord::invert(double* data, std::size_t count) const {
  const std::size_t n = slices();
  if (n == 0 || count % n != 0) throw ContractError("ScalingRecord::invert: shape mismatch");
  for (std::size_t i = 0; i < count; ++i) data[i] = invert(data[i], i % n);
}

ScalingRecord ScalingRecord::subset(const std::vector<std::size_t>& slices) const {
  std::vector<double> lo, hi;
  for (std::size_t s : slices) {
    if (s >= min_.size()) throw ContractError("ScalingRecord::subset: slice out of range");
    lo.push_back(min_[s]);
    hi.push_back(max_[s]);
  }
  return ScalingRecord(std::move(lo), std::move(hi));
}

nlohmann::json ScalingRecord::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (std::size_t i = 0; i < min_.size(); ++i) j.push_back({{"slice", i}, {"min", min_[i]}, {"max", max_[i]}});
  return j;
}

ScalingRecord ScalingRecord::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw PersistenceError("scaling record: expected an array of slices");
  std::vector<double> lo(j.size()), hi(j.size());
  std::vector<bool> seen(j.size(), false);
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("slice") || !e.contains("min") || !e.contains("max"))
      throw PersistenceError("scaling record: each entry needs slice, min and max");
    const auto s = e.at("slice").get<std::size_t>();
    if (s >= j.size() || seen[s]) throw PersistenceError("scaling record: bad or duplicate slice index");
    seen[s] = true;
    lo[s] = e.at("min").get<double>();
    hi[s] = e.at("max").get<double>();
  }
  try {
    return ScalingRecord(std::move(lo), std::move(hi));
  } catch (const ConfigError& e) {
    throw PersistenceError(std::string("scaling record: ") + e.what());
  }
}

}  // namespace fetinv::features
