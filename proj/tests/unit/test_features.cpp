// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fetinv/error.hpp"
#include "fetinv/features/features.hpp"
#include "fetinv/refmodel/dataset.hpp"

using namespace fetinv;
using namespace fetinv::features;
using fetinv::refmodel::BiasSpec;

namespace {

RawCurve curve_from(const std::vector<double>& vgs, double vds, double (*f)(double)) {
  RawCurve c;
  c.vds = vds;
  c.vgs = vgs;
  for (double v : vgs) c.id.push_back(f(v));
  return c;
}

}  // namespace

TEST_CASE("interpolation") {
  const BiasSpec b = BiasSpec::standard();
  RawCurve on_grid = curve_from(b.vgs_grid, 0.1, [](double v) { return 1e-3 * std::exp(0.1 * v); });
  const auto same = interpolate_to_grid(on_grid, b.vgs_grid);
  CHECK(same.linear == on_grid.id);
  CHECK(same.logspace == on_grid.id);

  RawCurve two;
  two.vds = 0.1;
  two.vgs = {0.0, 2.0};
  two.id = {1e-4, 1e-2};
  const auto mid = interpolate_to_grid(two, {1.0});
  CHECK(mid.logspace[0] == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(mid.linear[0] == doctest::Approx(5.05e-3).epsilon(1e-12));
  CHECK_THROWS_AS(interpolate_to_grid(two, {2.5}), InputError);
  CHECK_THROWS_AS(interpolate_to_grid(two, {-0.1}), InputError);

  // Refinement oracle: a smooth monotone curve sampled 10x denser than the
  // grid and interpolated back.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    const double k = u(rng), v0 = 10.0 * u(rng);
    auto f = [&](double v) { return 1e-4 * std::log1p(std::exp(k * (v - v0))) + 1e-6; };
    RawCurve dense;
    dense.vds = 1.0;
    const std::size_t n = 32 * 10;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = -5.9 + 55.8 * static_cast<double>(i) / static_cast<double>(n - 1);
      dense.vgs.push_back(v);
      dense.id.push_back(f(v));
    }
    const auto g = interpolate_to_grid(dense, b.vgs_grid);
    for (std::size_t j = 0; j < 32; ++j) {
      const double exact = f(b.vgs_grid[j]);
      CHECK(std::abs(g.linear[j] / exact - 1.0) < 1e-3);
      CHECK(std::abs(g.logspace[j] / exact - 1.0) < 1e-3);
    }
  }
}

TEST_CASE("noise floor") {
  CHECK(apply_noise_floor(1e-6) == 5e-5);
  CHECK(apply_noise_floor(1.0) == 1.0);
  CHECK(apply_noise_floor(5e-5) == 5e-5);
  CHECK_THROWS_AS(apply_noise_floor(0.0), InputError);
  CHECK_THROWS_AS(apply_noise_floor(-1.0), InputError);
}

TEST_CASE("differences") {
  CHECK(first_difference({1, 2, 4, 7}) == std::vector<double>{1, 2, 3});
  CHECK(second_difference({1, 2, 4, 7}) == std::vector<double>{1, 1});
  for (double v : first_difference(std::vector<double>(6, 3.0))) CHECK(v == 0.0);
  const auto ramp = std::vector<double>{0.5, 1.0, 1.5, 2.0, 2.5};
  for (double v : first_difference(ramp)) CHECK(v == 0.5);
  for (double v : second_difference(ramp)) CHECK(v == 0.0);
  CHECK_THROWS_AS(first_difference({1, 2}), InputError);
  CHECK_THROWS_AS(second_difference({1}), InputError);
}

TEST_CASE("feature matrix") {
  const BiasSpec b = BiasSpec::standard();
  std::vector<RawCurve> curves = {curve_from(b.vgs_grid, 0.1, +[](double v) { return std::exp(v / 10.0); }),
                                  curve_from(b.vgs_grid, 1.0, +[](double v) { return 2.0 * std::exp(v / 10.0); })};
  const FeatureTensor t = build_feature_matrix(curves, b);
  REQUIRE(t.rows == 32);
  CHECK(t.stage == Stage::engineered);
  for (std::size_t r = 0; r < 32; ++r) {
    CHECK(t.at(r, kLog0) == doctest::Approx(std::log10(t.at(r, kId0))).epsilon(1e-14));
    CHECK(t.at(r, kLog1) == doctest::Approx(std::log10(t.at(r, kId1))).epsilon(1e-14));
    // d log10(e^{v/10}) / dv = 0.1 / ln 10; central differences on a linear
    // function are exact.
    CHECK(std::abs(t.at(r, kDLog0) / (0.1 / std::log(10.0)) - 1.0) < 1e-2);
    CHECK(std::abs(t.at(r, kDLog1) / (0.1 / std::log(10.0)) - 1.0) < 1e-2);
  }
  // Unit-slope exponential: dlog10/dV = 1/ln 10.
  std::vector<double> fine;
  for (int i = 0; i <= 2000; ++i) fine.push_back(-5.9 + 55.8 * i / 2000.0);
  RawCurve e1 = curve_from(fine, 0.1, +[](double v) { return std::exp(v - 10.0) + 1e-300; });
  RawCurve e2 = e1;
  e2.vds = 1.0;
  const FeatureTensor te = build_feature_matrix(std::vector<RawCurve>{e1, e2}, b);
  for (std::size_t r = 0; r < 32; ++r) {
    if (std::exp(b.vgs_grid[r] - 10.0) > 1e-3 && r > 0 && std::exp(b.vgs_grid[r - 1] - 10.0) > 1e-3)
      CHECK(std::abs(te.at(r, kDLog0) / (1.0 / std::log(10.0)) - 1.0) < 1e-2);
  }

  // Flat above the floor: zero derivatives.
  std::vector<RawCurve> flat = {curve_from(b.vgs_grid, 0.1, +[](double) { return 0.3; }),
                                curve_from(b.vgs_grid, 1.0, +[](double) { return 0.3; })};
  const FeatureTensor tf = build_feature_matrix(flat, b);
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t c : {kDId0, kDId1, kDLog0, kDLog1}) CHECK(tf.at(r, c) == 0.0);
  }

  // Missing vds.
  CHECK_THROWS_AS(build_feature_matrix(std::vector<RawCurve>{flat[0]}, b), InputError);
}

TEST_CASE("pipeline stage tags") {
  const BiasSpec b = BiasSpec::standard();
  std::vector<RawCurve> curves = {curve_from(b.vgs_grid, 0.1, +[](double v) { return 1e-7 * std::exp(v / 4.0); }),
                                  curve_from(b.vgs_grid, 1.0, +[](double v) { return 1e-6 * std::exp(v / 4.0); })};
  GridCurves g = interpolate_curves(curves, b);
  CHECK_THROWS_AS(engineer_features(g), ContractError);  // floor not yet applied
  apply_noise_floor(g);
  const GridCurves once = g;
  apply_noise_floor(g);  // idempotent
  CHECK(g.linear == once.linear);
  // Interpolating already floored grid data again changes nothing.
  std::vector<RawCurve> again = {{0.1, b.vgs_grid, {g.linear.begin(), g.linear.begin() + 32}},
                                 {1.0, b.vgs_grid, {g.linear.begin() + 32, g.linear.end()}}};
  GridCurves g2 = interpolate_curves(again, b);
  apply_noise_floor(g2);
  CHECK(g2.linear == g.linear);

  const FeatureTensor t = engineer_features(g);
  std::vector<double> stack = t.u;
  const ScalingRecord rec = ScalingRecord::fit(stack, kFeatureColumns);
  const FeatureTensor s = scale_features(t, rec);
  CHECK_THROWS_AS(scale_features(s, rec), ContractError);
  CHECK_THROWS_AS(ablate_features(t, {0}), ContractError);
  GridCurves scaled_like = g;
  scaled_like.stage = Stage::scaled;
  CHECK_THROWS_AS(apply_noise_floor(scaled_like), ContractError);
  // Training data scale into [-1, 1].
  for (double v : s.u) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  const FeatureTensor back = unscale_features(s, rec);
  for (std::size_t i = 0; i < t.u.size(); ++i) CHECK(std::abs(back.u[i] - t.u[i]) <= 1e-12);
}

TEST_CASE("min-max scaling") {
  const ScalingRecord r = ScalingRecord::fit(std::vector<double>{0, 5, 10}, 1);
  std::vector<double> x = {0, 5, 10};
  r.apply(x.data(), x.size());
  CHECK(x == std::vector<double>{-1, 0, 1});
  CHECK(r.apply(12.0, 0) == doctest::Approx(1.4).epsilon(1e-15));
  CHECK_THROWS_AS(ScalingRecord::fit(std::vector<double>{1, 2, 1, 2}, 2, {"a", "b"}), ConfigError);
  try {
    ScalingRecord::fit(std::vector<double>{1, 3, 2, 3}, 2, {"mu", "phi_b0"});
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("phi_b0") != std::string::npos);
  }

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> data(24);
    for (double& v : data) v = u(rng);
    const ScalingRecord rec = ScalingRecord::fit(data, 8);
    auto y = data;
    rec.apply(y.data(), y.size());
    rec.invert(y.data(), y.size());
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - data[i]));
  }
  CHECK(worst < 1e-12);

  const auto j = r.to_json();
  CHECK(ScalingRecord::from_json(j) == r);
  CHECK_THROWS_AS(ScalingRecord::from_json(nlohmann::json::object()), PersistenceError);
}

TEST_CASE("ablation masks") {
  FeatureTensor t;
  t.stage = Stage::scaled;
  t.rows = 3;
  t.u.resize(24);
  for (std::size_t i = 0; i < 24; ++i) t.u[i] = 0.1 * static_cast<double>(i + 1);
  CHECK(ablate_features(t, {}).u == t.u);
  for (double v : ablate_features(t, {0, 1, 2, 3, 4, 5, 6, 7}).u) CHECK(v == 0.0);
  const auto log_only = ablate_features(t, {0, 1, 4, 5});
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      const bool masked = c == 0 || c == 1 || c == 4 || c == 5;
      CHECK(log_only.at(r, c) == (masked ? 0.0 : t.at(r, c)));
    }
  }
  CHECK_THROWS_AS(ablate_features(t, {8}), InputError);
}

TEST_CASE("feature matrices from simulated devices are finite") {
  refmodel::DatasetSpec spec;
  spec.count = 50;
  spec.master_seed = 5;
  const auto ds = refmodel::generate_dataset(spec);
  for (const auto& d : ds.devices) {
    const FeatureTensor t = build_feature_matrix(d.curves);
    for (double v : t.u) CHECK(std::isfinite(v));
    for (std::size_t r = 0; r < 32; ++r) {
      CHECK(t.at(r, kId0) >= kNoiseFloor);
      CHECK(t.at(r, kLog0) == doctest::Approx(std::log10(t.at(r, kId0))).epsilon(1e-14));
    }
  }
}

TEST_CASE("measured csv") {
  std::istringstream is(
      "device_id,vds,vgs,id_uA_per_um\n"
      "A,1.0,1.0,2e-3\nA,0.1,0.0,1e-4\nA,1.0,0.0,1e-3\nA,0.1,1.0,2e-4\nB,0.1,0,1\nB,0.1,1,2\n");
  const auto m = read_measured_csv(is);
  REQUIRE(m.size() == 2);
  REQUIRE(m.at("A").size() == 2);
  CHECK(m.at("A")[0].vds == 0.1);
  CHECK(m.at("A")[0].vgs == std::vector<double>{0.0, 1.0});
  CHECK(m.at("A")[1].id == std::vector<double>{1e-3, 2e-3});
  std::istringstream bad("device_id,vds,vgs,id_uA_per_um\nA,x,1,1\n");
  CHECK_THROWS_AS(read_measured_csv(bad), InputError);
}
