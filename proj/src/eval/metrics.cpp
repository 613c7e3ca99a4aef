// SPDX-License-Identifier: Apache-2.0
#include "fetinv/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include <json.hpp>

#include "fetinv/error.hpp"
#include "fetinv/features/features.hpp"
#include "fetinv/parallel.hpp"
#include "fetinv/refmodel/physics.hpp"
#include "fetinv/seed.hpp"

namespace fetinv::eval {

using refmodel::DeviceParams;
using refmodel::kNumParams;
using training::kDeviceCurves;
using training::kDeviceFeatures;
using training::kGridSteps;

double r_squared(const double* truth, const double* pred, std::size_t n) {
  if (n < 2) throw ContractError("r_squared: need at least two points");
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += truth[i];
  mean /= static_cast<double>(n);
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  }
  if (!(ss_tot > 0.0)) throw InputError("undefined R^2: the true curve has zero variance");
  return 1.0 - ss_res / ss_tot;
}

double r_squared_curve(const std::vector<double>& truth, const std::vector<double>& pred) {
  if (truth.size() != pred.size()) throw ContractError("r_squared_curve: length mismatch");
  std::vector<double> lt(truth.size()), lp(pred.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!(truth[i] > 0.0) || !(pred[i] > 0.0)) throw InputError("r_squared_curve: currents must be positive");
    lt[i] = std::log10(truth[i]);
    lp[i] = std::log10(pred[i]);
  }
  return 0.5 * (r_squared(truth.data(), pred.data(), truth.size()) + r_squared(lt.data(), lp.data(), lt.size()));
}

double r_squared_block(const double* truth, const double* pred, std::size_t steps) {
  constexpr std::size_t ch = features::kCurveChannels;
  std::vector<double> t(steps), p(steps);
  double sum = 0.0;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t k = 0; k < steps; ++k) {
      t[k] = truth[k * ch + c];
      p[k] = pred[k * ch + c];
    }
    sum += r_squared(t.data(), p.data(), steps);
  }
  return sum / static_cast<double>(ch);
}

double r_squared_device(const refmodel::IVCurveSet& truth, const refmodel::IVCurveSet& pred) {
  if (truth.vgs != pred.vgs || truth.vds != pred.vds) throw ContractError("r_squared_device: grids differ");
  const auto vt = features::build_feature_matrix(truth).v();
  const auto vp = features::build_feature_matrix(pred).v();
  return r_squared_block(vt.data(), vp.data(), truth.vgs.size());
}

double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw ContractError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ContractError("quantile level must lie in [0, 1]");
  std::sort(x.begin(), x.end());
  const double h = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

Quantiles quantiles(const std::vector<double>& x) {
  return {quantile(x, 0.05), quantile(x, 0.10), quantile(x, 0.25), quantile(x, 0.50), quantile(x, 0.75)};
}

ParamErrors parameter_errors(const std::vector<DeviceParams>& actual, const std::vector<DeviceParams>& predicted,
                             const refmodel::ParamRanges& ranges) {
  if (actual.size() != predicted.size()) throw ContractError("parameter_errors: length mismatch");
  if (actual.empty()) throw ContractError("parameter_errors: no devices");
  ParamErrors out{};
  std::vector<double> err(actual.size()), abs_err(actual.size());
  for (std::size_t k = 0; k < kNumParams; ++k) {
    for (std::size_t i = 0; i < actual.size(); ++i) {
      err[i] = actual[i].to_array()[k] - predicted[i].to_array()[k];
      abs_err[i] = std::abs(err[i]);
    }
    double mean = 0.0, sd = 0.0;
    training::mean_std(err, mean, sd);
    const double w = ranges[k].width();
    out[k].median_abs = quantile(abs_err, 0.5);
    out[k].std_dev = sd;
    out[k].median_abs_pct = 100.0 * out[k].median_abs / w;
    out[k].std_dev_pct = 100.0 * sd / w;
  }
  return out;
}

double scaled_param_mse(const std::vector<DeviceParams>& actual, const std::vector<DeviceParams>& predicted,
                        const features::ScalingRecord& y_rec) {
  if (actual.size() != predicted.size() || actual.empty()) throw ContractError("scaled_param_mse: bad lengths");
  const auto ya = training::scale_params(actual, y_rec);
  const auto yp = training::scale_params(predicted, y_rec);
  double s = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) s += (ya[i] - yp[i]) * (ya[i] - yp[i]);
  return s / static_cast<double>(ya.size());
}

const char* to_string(EvalMode m) noexcept { return m == EvalMode::resimulate ? "resimulate" : "surrogate"; }

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "resimulate") return EvalMode::resimulate;
  if (s == "surrogate") return EvalMode::surrogate;
  throw ConfigError("unknown evaluation mode '" + s + "'");
}

std::vector<double> EvalReport::r2_values() const {
  std::vector<double> r;
  r.reserve(devices.size());
  for (const auto& d : devices) r.push_back(d.r2);
  return r;
}

std::vector<std::pair<double, double>> EvalReport::cumulative_histogram() const {
  std::vector<double> r = r2_values();
  std::sort(r.begin(), r.end());
  std::vector<std::pair<double, double>> h(r.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    h[i] = {r[i], static_cast<double>(i + 1) / static_cast<double>(r.size())};
  return h;
}

EvalReport evaluate_predictions(const training::PhysicsSet& test, const std::vector<DeviceParams>& predicted,
                                const EvalOptions& opt, const features::ScalingRecord* y_rec) {
  const std::size_t n = test.size();
  if (predicted.size() != n) throw ContractError("evaluate: one prediction per test device is required");
  if (opt.mode == EvalMode::surrogate && !opt.surrogate) throw DependencyError("surrogate evaluation needs a forward model");

  std::vector<double> surrogate_curves;
  if (opt.mode == EvalMode::surrogate) {
    surrogate_curves = opt.surrogate->predict_curves(predicted);
    // The surrogate's log channels define one current curve per vds; both
    // R^2 terms are scored on that curve, as for a resimulated device.
    const double log_floor = std::log10(features::kNoiseFloor);
    for (std::size_t r = 0; r < n * kGridSteps; ++r) {
      double* c = &surrogate_curves[r * features::kCurveChannels];
      c[2] = std::max(c[2], log_floor);
      c[3] = std::max(c[3], log_floor);
      c[0] = std::pow(10.0, c[2]);
      c[1] = std::pow(10.0, c[3]);
    }
  }

  std::vector<double> r2(n, 0.0);
  std::vector<std::string> errors(n);
  parallel_for(n, opt.workers, [&](std::size_t i) {
    std::vector<double> truth(kDeviceCurves);
    const double* u = test.features(i);
    for (std::size_t k = 0; k < kGridSteps; ++k)
      std::copy_n(u + k * features::kFeatureColumns, features::kCurveChannels, &truth[k * features::kCurveChannels]);
    try {
      if (opt.mode == EvalMode::surrogate) {
        r2[i] = r_squared_block(truth.data(), &surrogate_curves[i * kDeviceCurves], kGridSteps);
      } else {
        const auto curves = refmodel::simulate_curves(predicted[i], opt.bias, opt.constants);
        const auto v = features::build_feature_matrix(curves).v();
        r2[i] = r_squared_block(truth.data(), v.data(), kGridSteps);
      }
    } catch (const Error& e) {
      errors[i] = std::string(to_string(e.kind())) + ": " + e.what();
    }
  });

  EvalReport rep;
  rep.mode = opt.mode;
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      rep.failures.push_back({test.ids[i], errors[i]});
      continue;
    }
    DeviceResult d;
    d.id = test.ids[i];
    d.r2 = r2[i];
    if (!test.params.empty()) d.actual = test.params[i];
    d.predicted = predicted[i];
    rep.devices.push_back(d);
  }
  if (!rep.devices.empty()) rep.r2 = quantiles(rep.r2_values());
  if (!test.params.empty() && n > 0) {
    rep.param_errors = parameter_errors(test.params, predicted, opt.ranges);
    rep.param_mse = scaled_param_mse(test.params, predicted, y_rec ? *y_rec : training::param_record(opt.ranges));
  }
  return rep;
}

EvalReport evaluate_inverse(const training::InverseModel& model, const training::PhysicsSet& test,
                            const EvalOptions& opt) {
  return evaluate_predictions(test, model.extract(test.u), opt, &model.y_rec);
}

void write_report_csv(std::ostream& os, const EvalReport& r) {
  os << "device_id,r2";
  for (auto name : refmodel::kParamNames) os << ",pred_" << name;
  for (auto name : refmodel::kParamNames) os << ",true_" << name;
  os << '\n' << std::setprecision(17);
  for (const auto& d : r.devices) {
    os << d.id << ',' << d.r2;
    for (double v : d.predicted.to_array()) os << ',' << v;
    for (std::size_t k = 0; k < kNumParams; ++k) {
      os << ',';
      if (d.actual) os << d.actual->to_array()[k];
    }
    os << '\n';
  }
}

void write_histogram_csv(std::ostream& os, const EvalReport& r) {
  os << "r2,cumulative_fraction\n" << std::setprecision(17);
  for (const auto& [v, f] : r.cumulative_histogram()) os << v << ',' << f << '\n';
}

std::string report_summary_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(r.mode);
  j["devices"] = r.devices.size();
  j["failures"] = r.failures.size();
  j["r2_quantiles"] = {{"q5", r.r2.q5}, {"q10", r.r2.q10}, {"q25", r.r2.q25}, {"q50", r.r2.q50}, {"q75", r.r2.q75}};
  if (r.param_errors) {
    nlohmann::ordered_json pe;
    for (std::size_t k = 0; k < kNumParams; ++k) {
      const auto& s = (*r.param_errors)[k];
      pe[std::string(refmodel::kParamNames[k])] = {{"median_abs", s.median_abs},
                                                   {"std_dev", s.std_dev},
                                                   {"median_abs_pct", s.median_abs_pct},
                                                   {"std_dev_pct", s.std_dev_pct}};
    }
    j["parameter_errors"] = pe;
  }
  if (r.param_mse) j["scaled_param_mse"] = *r.param_mse;
  nlohmann::ordered_json fails = nlohmann::ordered_json::array();
  for (const auto& f : r.failures) fails.push_back({{"device_id", f.id}, {"message", f.message}});
  j["failed_devices"] = fails;
  return j.dump(2);
}

std::vector<Ablation> standard_ablations() {
  return {{"baseline", {}},
          {"no_log", {2, 3, 6, 7}},
          {"log_only", {0, 1, 4, 5}},
          {"no_derivatives", {4, 5, 6, 7}},
          {"single_vds", {1, 3, 5, 7}}};
}

std::vector<AblationRow> ablation_study(const training::PhysicsSet& data, const training::PhysicsSet& test,
                                        const std::vector<Ablation>& ablations, std::size_t repeats,
                                        const training::PipelineConfig& base, const EvalOptions& eval_opt) {
  if (repeats < 1) throw ConfigError("ablation: repeats must be >= 1");
  std::vector<AblationRow> rows;
  for (const auto& a : ablations) rows.push_back({a.name, a.mask, {}, {}});
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    training::PipelineConfig cfg = base;
    cfg.seed = derive_seed(base.seed, "ablation", rep);
    const auto seeds = training::stage_seeds(cfg.seed);
    const training::Split split = training::make_split(data.size(), cfg.dev_fraction, seeds.at("split"));
    const training::ForwardModel fwd = training::train_forward(data, split, cfg);
    training::AugmentedSet aug;
    if (cfg.pretrain) aug = training::generate_augmented(fwd, cfg.ranges, cfg.augmented_count, seeds.at("augment"));
    for (std::size_t a = 0; a < ablations.size(); ++a) {
      cfg.mask = ablations[a].mask;
      const auto res = training::run_pipeline(data, cfg, {&fwd, cfg.pretrain ? &aug : nullptr});
      const EvalReport r = evaluate_inverse(res.inverse, test, eval_opt);
      rows[a].q5.push_back(r.r2.q5);
      rows[a].mse.push_back(r.param_mse.value_or(0.0));
    }
  }
  for (auto& r : rows) {
    training::mean_std(r.q5, r.mean_q5, r.std_q5);
    training::mean_std(r.mse, r.mean_mse, r.std_mse);
  }
  return rows;
}

}  // namespace fetinv::eval
