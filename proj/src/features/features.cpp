// SPDX-License-Identifier: Apache-2.0
#include "fetinv/features/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fetinv/error.hpp"

namespace fetinv::features {

const std::array<const char*, kFeatureColumns> kColumnNames = {
    "id_vds_lo", "id_vds_hi", "log_id_vds_lo", "log_id_vds_hi",
    "did_vds_lo", "did_vds_hi", "dlog_id_vds_lo", "dlog_id_vds_hi"};

const char* to_string(Stage s) noexcept {
  switch (s) {
    case Stage::raw: return "raw";
    case Stage::interpolated: return "interpolated";
    case Stage::floored: return "floored";
    case Stage::engineered: return "engineered";
    case Stage::scaled: return "scaled";
  }
  return "?";
}

namespace {

void require_stage(Stage have, Stage want, const char* op) {
  if (have != want)
    throw ContractError(std::string(op) + ": expected stage '" + to_string(want) + "', got '" + to_string(have) + "'");
}

}  // namespace

void RawCurve::validate() const {
  if (vgs.size() != id.size()) throw InputError("curve: vgs and id lengths differ");
  if (vgs.size() < 2) throw InputError("curve: need at least two points");
  for (std::size_t i = 0; i < vgs.size(); ++i) {
    if (!std::isfinite(vgs[i]) || !std::isfinite(id[i])) throw InputError("curve: non-finite sample");
    if (!(id[i] > 0.0)) throw InputError("curve: currents must be positive");
    if (i > 0 && !(vgs[i] > vgs[i - 1])) throw InputError("curve: vgs must be strictly increasing");
  }
}

std::vector<double> FeatureTensor::v() const {
  std::vector<double> out(rows * kCurveChannels);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < kCurveChannels; ++c) out[r * kCurveChannels + c] = u[r * kFeatureColumns + c];
  return out;
}

Interpolated interpolate_to_grid(const RawCurve& curve, const std::vector<double>& grid) {
  curve.validate();
  const auto& x = curve.vgs;
  // Tolerate grid points that sit on the end samples up to rounding.
  const double slack = 1e-9 * std::max(1.0, x.back() - x.front());
  Interpolated out;
  out.linear.resize(grid.size());
  out.logspace.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double g = grid[k];
    if (g < x.front() - slack || g > x.back() + slack) {
      std::ostringstream os;
      os << "interpolate_to_grid: vgs = " << g << " V outside the measured span [" << x.front() << ", "
         << x.back() << "] at vds = " << curve.vds << " V";
      throw InputError(os.str());
    }
    auto it = std::lower_bound(x.begin(), x.end(), g);
    std::size_t j = static_cast<std::size_t>(it - x.begin());
    if (j < x.size() && std::abs(x[j] - g) <= slack) {
      out.linear[k] = curve.id[j];
      out.logspace[k] = curve.id[j];
      continue;
    }
    if (j == 0) {
      out.linear[k] = out.logspace[k] = curve.id.front();
      continue;
    }
    if (j == x.size()) {
      out.linear[k] = out.logspace[k] = curve.id.back();
      continue;
    }
    const double t = (g - x[j - 1]) / (x[j] - x[j - 1]);
    const double y0 = curve.id[j - 1], y1 = curve.id[j];
    out.linear[k] = y0 + t * (y1 - y0);
    const double l0 = std::log10(y0), l1 = std::log10(y1);
    out.logspace[k] = std::pow(10.0, l0 + t * (l1 - l0));
  }
  return out;
}

double apply_noise_floor(double id) {
  if (!(id > 0.0) || !std::isfinite(id)) throw InputError("apply_noise_floor: current must be positive and finite");
  return std::max(id, kNoiseFloor);
}

void apply_noise_floor(GridCurves& g) {
  if (g.stage == Stage::floored) return;  // idempotent
  require_stage(g.stage, Stage::interpolated, "apply_noise_floor");
  for (double& v : g.linear) v = apply_noise_floor(v);
  for (double& v : g.logspace) v = apply_noise_floor(v);
  g.stage = Stage::floored;
}

std::vector<double> first_difference(const std::vector<double>& x) {
  if (x.size() < 3) throw InputError("first_difference: need at least 3 samples");
  std::vector<double> d(x.size() - 1);
  for (std::size_t k = 1; k < x.size(); ++k) d[k - 1] = x[k] - x[k - 1];
  return d;
}

std::vector<double> second_difference(const std::vector<double>& x) {
  const auto d = first_difference(x);
  std::vector<double> d2(d.size() - 1);
  for (std::size_t k = 1; k < d.size(); ++k) d2[k - 1] = d[k] - d[k - 1];
  return d2;
}

std::vector<double> grid_derivative(const std::vector<double>& y, const std::vector<double>& x) {
  const std::size_t n = y.size();
  if (n != x.size() || n < 2) throw InputError("grid_derivative: need matching vectors of length >= 2");
  std::vector<double> d(n);
  d[0] = (y[1] - y[0]) / (x[1] - x[0]);
  d[n - 1] = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
  for (std::size_t k = 1; k + 1 < n; ++k) d[k] = (y[k + 1] - y[k - 1]) / (x[k + 1] - x[k - 1]);
  return d;
}

GridCurves interpolate_curves(const std::vector<RawCurve>& curves, const refmodel::BiasSpec& bias) {
  GridCurves g;
  g.vds = bias.vds_values;
  g.vgs = bias.vgs_grid;
  const std::size_t nv = bias.vgs_grid.size();
  g.linear.resize(bias.vds_values.size() * nv);
  g.logspace.resize(g.linear.size());
  for (std::size_t i = 0; i < bias.vds_values.size(); ++i) {
    const double vds = bias.vds_values[i];
    const RawCurve* match = nullptr;
    for (const auto& c : curves) {
      if (std::abs(c.vds - vds) <= 1e-9) {
        if (match) throw InputError("duplicate curve for vds = " + std::to_string(vds) + " V");
        match = &c;
      }
    }
    if (!match) throw InputError("missing curve for vds = " + std::to_string(vds) + " V");
    const Interpolated it = interpolate_to_grid(*match, bias.vgs_grid);
    std::copy(it.linear.begin(), it.linear.end(), g.linear.begin() + static_cast<std::ptrdiff_t>(i * nv));
    std::copy(it.logspace.begin(), it.logspace.end(), g.logspace.begin() + static_cast<std::ptrdiff_t>(i * nv));
  }
  g.stage = Stage::interpolated;
  return g;
}

GridCurves grid_curves(const refmodel::IVCurveSet& curves) {
  for (double v : curves.id)
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError("grid_curves: currents must be positive and finite");
  GridCurves g;
  g.vds = curves.vds;
  g.vgs = curves.vgs;
  g.linear = curves.id;
  g.logspace = curves.id;
  g.stage = Stage::interpolated;
  return g;
}

FeatureTensor engineer_features(const GridCurves& g) {
  require_stage(g.stage, Stage::floored, "engineer_features");
  if (g.vds.size() != 2) throw InputError("engineer_features: exactly two drain biases are required");
  const std::size_t n = g.vgs.size();
  FeatureTensor t;
  t.rows = n;
  t.u.assign(n * kFeatureColumns, 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    std::vector<double> lin(g.linear.begin() + static_cast<std::ptrdiff_t>(i * n),
                            g.linear.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    std::vector<double> lg(n);
    for (std::size_t k = 0; k < n; ++k) lg[k] = std::log10(g.logspace[i * n + k]);
    const auto dlin = grid_derivative(lin, g.vgs);
    const auto dlog = grid_derivative(lg, g.vgs);
    for (std::size_t k = 0; k < n; ++k) {
      double* row = &t.u[k * kFeatureColumns];
      row[kId0 + i] = lin[k];
      row[kLog0 + i] = lg[k];
      row[kDId0 + i] = dlin[k];
      row[kDLog0 + i] = dlog[k];
    }
  }
  t.stage = Stage::engineered;
  return t;
}

FeatureTensor build_feature_matrix(const std::vector<RawCurve>& curves, const refmodel::BiasSpec& bias) {
  GridCurves g = interpolate_curves(curves, bias);
  apply_noise_floor(g);
  return engineer_features(g);
}

FeatureTensor build_feature_matrix(const refmodel::IVCurveSet& curves) {
  GridCurves g = grid_curves(curves);
  apply_noise_floor(g);
  return engineer_features(g);
}

FeatureTensor scale_features(const FeatureTensor& t, const ScalingRecord& rec) {
  require_stage(t.stage, Stage::engineered, "scale_features");
  if (rec.slices() != kFeatureColumns) throw ContractError("scale_features: record must have 8 slices");
  FeatureTensor out = t;
  rec.apply(out.u.data(), out.u.size());
  out.stage = Stage::scaled;
  return out;
}

FeatureTensor unscale_features(const FeatureTensor& t, const ScalingRecord& rec) {
  require_stage(t.stage, Stage::scaled, "unscale_features");
  if (rec.slices() != kFeatureColumns) throw ContractError("unscale_features: record must have 8 slices");
  FeatureTensor out = t;
  rec.invert(out.u.data(), out.u.size());
  out.stage = Stage::engineered;
  return out;
}

namespace {
void check_mask(const std::vector<std::size_t>& mask) {
  for (std::size_t c : mask)
    if (c >= kFeatureColumns) throw InputError("ablation mask: column " + std::to_string(c) + " out of range 0..7");
}
}  // namespace

FeatureTensor ablate_features(const FeatureTensor& t, const std::vector<std::size_t>& mask) {
  require_stage(t.stage, Stage::scaled, "ablate_features");
  check_mask(mask);
  FeatureTensor out = t;
  for (std::size_t r = 0; r < out.rows; ++r)
    for (std::size_t c : mask) out.u[r * kFeatureColumns + c] = 0.0;
  return out;
}

void ablate_columns(std::vector<double>& stack, const std::vector<std::size_t>& mask) {
  check_mask(mask);
  if (stack.size() % kFeatureColumns != 0) throw ContractError("ablate_columns: bad stack shape");
  for (std::size_t r = 0; r < stack.size() / kFeatureColumns; ++r)
    for (std::size_t c : mask) stack[r * kFeatureColumns + c] = 0.0;
}

std::map<std::string, std::vector<RawCurve>> read_measured_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InputError("measured CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "device_id,vds,vgs,id_uA_per_um") throw InputError("measured CSV header mismatch: '" + line + "'");

  std::map<std::string, std::map<double, std::vector<std::pair<double, double>>>> groups;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) throw InputError("measured CSV line " + std::to_string(line_no) + ": expected 4 columns");
    double vals[3];
    for (int k = 0; k < 3; ++k) {
      char* end = nullptr;
      vals[k] = std::strtod(cells[1 + k].c_str(), &end);
      if (cells[1 + k].empty() || *end != '\0' || !std::isfinite(vals[k]))
        throw InputError("measured CSV line " + std::to_string(line_no) + ": bad number '" + cells[1 + k] + "'");
    }
    groups[cells[0]][vals[0]].emplace_back(vals[1], vals[2]);
  }
  std::map<std::string, std::vector<RawCurve>> out;
  for (auto& [dev, by_vds] : groups) {
    for (auto& [vds, pts] : by_vds) {
      std::sort(pts.begin(), pts.end());
      RawCurve c;
      c.vds = vds;
      for (const auto& [v, i] : pts) {
        c.vgs.push_back(v);
        c.id.push_back(i);
      }
      out[dev].push_back(std::move(c));
    }
  }
  return out;
}

std::map<std::string, std::vector<RawCurve>> read_measured_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open measured data: " + path);
  return read_measured_csv(is);
}

}  // namespace fetinv::features
