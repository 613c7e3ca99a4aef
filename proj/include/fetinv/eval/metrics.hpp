// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fetinv/refmodel/types.hpp"
#include "fetinv/training/pipeline.hpp"

namespace fetinv::eval {

/// 1 - SS_res / SS_tot against the mean of `truth`. Throws InputError when
/// the truth has zero variance.
double r_squared(const double* truth, const double* pred, std::size_t n);

/// Mean of the linear-space and log10-space R^2 of one preprocessed curve.
double r_squared_curve(const std::vector<double>& truth, const std::vector<double>& pred);

/// R^2 of two 32 x 4 curve blocks [vgs][lin0, lin1, log0, log1]: the lin
/// and log R^2 of each drain bias are averaged, then the two biases.
double r_squared_block(const double* truth, const double* pred, std::size_t steps);

/// Both curve sets are interpolated and floored, then compared.
double r_squared_device(const refmodel::IVCurveSet& truth, const refmodel::IVCurveSet& pred);

/// Linear-interpolation quantile (sorted copy; q in [0, 1]).
double quantile(std::vector<double> x, double q);

struct Quantiles {
  double q5 = 0, q10 = 0, q25 = 0, q50 = 0, q75 = 0;
};
Quantiles quantiles(const std::vector<double>& x);

struct ParamErrorStats {
  double median_abs = 0.0;
  double std_dev = 0.0;
  double median_abs_pct = 0.0;  ///< % of the range width
  double std_dev_pct = 0.0;
};
using ParamErrors = std::array<ParamErrorStats, refmodel::kNumParams>;

ParamErrors parameter_errors(const std::vector<refmodel::DeviceParams>& actual,
                             const std::vector<refmodel::DeviceParams>& predicted, const refmodel::ParamRanges& ranges);

/// Mean over devices and parameters of the squared scaled error.
double scaled_param_mse(const std::vector<refmodel::DeviceParams>& actual,
                        const std::vector<refmodel::DeviceParams>& predicted, const features::ScalingRecord& y_rec);

enum class EvalMode { resimulate, surrogate };
const char* to_string(EvalMode m) noexcept;
EvalMode eval_mode_from_string(const std::string& s);

struct DeviceResult {
  std::uint64_t id = 0;
  double r2 = 0.0;
  std::optional<refmodel::DeviceParams> actual;
  refmodel::DeviceParams predicted;
};

struct DeviceError {
  std::uint64_t id = 0;
  std::string message;
};

struct EvalReport {
  EvalMode mode = EvalMode::resimulate;
  std::vector<DeviceResult> devices;  ///< successful devices, input order
  std::vector<DeviceError> failures;
  Quantiles r2;
  std::optional<ParamErrors> param_errors;
  std::optional<double> param_mse;

  std::vector<double> r2_values() const;
  /// (value, cumulative fraction) over sorted R^2.
  std::vector<std::pair<double, double>> cumulative_histogram() const;
};

struct EvalOptions {
  EvalMode mode = EvalMode::resimulate;
  const training::ForwardModel* surrogate = nullptr;  ///< required for surrogate mode
  refmodel::BiasSpec bias = refmodel::BiasSpec::standard();
  refmodel::PhysicalConstants constants{};
  refmodel::ParamRanges ranges = refmodel::default_ranges();
  unsigned workers = 0;
};

/// R^2 of curves regenerated from `predicted` against the test features.
EvalReport evaluate_predictions(const training::PhysicsSet& test, const std::vector<refmodel::DeviceParams>& predicted,
                                const EvalOptions& opt, const features::ScalingRecord* y_rec = nullptr);

/// Extract then evaluate_predictions.
EvalReport evaluate_inverse(const training::InverseModel& model, const training::PhysicsSet& test,
                            const EvalOptions& opt);

void write_report_csv(std::ostream& os, const EvalReport& r);
void write_histogram_csv(std::ostream& os, const EvalReport& r);
/// Summary block as JSON text.
std::string report_summary_json(const EvalReport& r);

struct Ablation {
  std::string name;
  std::vector<std::size_t> mask;
};

/// Baseline (empty mask) plus the four standard input ablations.
std::vector<Ablation> standard_ablations();

struct AblationRow {
  std::string name;
  std::vector<std::size_t> mask;
  std::vector<double> q5, mse;  ///< one entry per repeat
  double mean_q5 = 0, std_q5 = 0, mean_mse = 0, std_mse = 0;
};

/// Per repeat, the split, surrogate and augmented set are shared by every
/// ablation, so only the inverse input changes.
std::vector<AblationRow> ablation_study(const training::PhysicsSet& data, const training::PhysicsSet& test,
                                        const std::vector<Ablation>& ablations, std::size_t repeats,
                                        const training::PipelineConfig& base, const EvalOptions& eval_opt);

}  // namespace fetinv::eval
