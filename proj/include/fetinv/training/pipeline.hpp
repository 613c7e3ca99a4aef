// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fetinv/features/features.hpp"
#include "fetinv/features/scaling.hpp"
#include "fetinv/nn/io.hpp"
#include "fetinv/nn/network.hpp"
#include "fetinv/refmodel/dataset.hpp"
#include "fetinv/training/train.hpp"

namespace fetinv::training {

inline constexpr std::size_t kGridSteps = 32;
inline constexpr std::size_t kDeviceFeatures = kGridSteps * features::kFeatureColumns;  // 256
inline constexpr std::size_t kDeviceCurves = kGridSteps * features::kCurveChannels;    // 128

/// Physics devices with their engineered (unscaled) feature matrices.
struct PhysicsSet {
  std::vector<std::uint64_t> ids;
  std::vector<refmodel::DeviceParams> params;
  std::vector<double> u;  ///< size() x 32 x 8

  std::size_t size() const noexcept { return ids.size(); }
  PhysicsSet subset(const std::vector<std::size_t>& idx) const;
  /// Engineered 32 x 8 matrix of device i.
  const double* features(std::size_t i) const { return u.data() + i * kDeviceFeatures; }
};

/// Builds features for every record; all records must carry parameters.
PhysicsSet make_physics_set(const std::vector<refmodel::DeviceRecord>& records);

/// Parameter scaling from the sampling ranges, so tanh outputs map strictly
/// inside them.
features::ScalingRecord param_record(const refmodel::ParamRanges& ranges);

std::vector<double> scale_params(const std::vector<refmodel::DeviceParams>& params, const features::ScalingRecord& y_rec);
std::vector<refmodel::DeviceParams> unscale_params(const std::vector<double>& y, const features::ScalingRecord& y_rec);

/// Scaled features (mask applied) and scaled curve targets of a set.
struct ScaledSet {
  std::vector<double> u;  ///< n x 256, masked columns zeroed
  std::vector<double> v;  ///< n x 128, never masked
  std::vector<double> y;  ///< n x 8
};
ScaledSet scale_set(const PhysicsSet& set, const features::ScalingRecord& u_rec, const features::ScalingRecord& y_rec,
                    const std::vector<std::size_t>& mask = {});

/// Trained surrogate plus the records that define its scaled spaces.
struct ForwardModel {
  nn::Network net;
  features::ScalingRecord u_rec;  ///< 8 feature columns; the first 4 scale curves
  features::ScalingRecord y_rec;

  /// Unscaled 32 x 4 curves [vgs][lin0, lin1, log0, log1] for physical parameters.
  std::vector<double> predict_curves(const std::vector<refmodel::DeviceParams>& params) const;
  nn::Checkpoint checkpoint() const;
  static ForwardModel from_checkpoint(const nn::Checkpoint& c);
};

struct InverseModel {
  nn::Network net;
  features::ScalingRecord u_rec;
  features::ScalingRecord y_rec;
  std::vector<std::size_t> mask;

  /// Parameters for stacked engineered matrices (n x 256).
  std::vector<refmodel::DeviceParams> extract(const std::vector<double>& u_engineered) const;
  nn::Checkpoint checkpoint() const;
  static InverseModel from_checkpoint(const nn::Checkpoint& c);
};

/// Surrogate-generated training pairs, all in scaled space.
struct AugmentedSet {
  std::vector<double> u;  ///< n x 256, unmasked
  std::vector<double> v;  ///< n x 128, the surrogate output itself
  std::vector<double> y;  ///< n x 8
  std::size_t size() const noexcept { return y.size() / refmodel::kNumParams; }
};

/// Engineered (unscaled) features from unscaled surrogate curves. Linear
/// channels are floored, log channels floored at log10 of the floor.
std::vector<double> surrogate_features(const std::vector<double>& curves, std::size_t count,
                                       const std::vector<double>& vgs_grid);

/// `count` parameter vectors drawn by the refmodel sampler from the
/// "augment" seed stream, pushed through the surrogate.
AugmentedSet generate_augmented(const ForwardModel& fwd, const refmodel::ParamRanges& ranges, std::size_t count,
                                std::uint64_t seed);

struct PipelineConfig {
  nn::ForwardNetConfig forward_net{};
  nn::InverseNetConfig inverse_net{};
  StagePresets presets{};
  std::size_t augmented_count = 100000;
  double dev_fraction = 0.2;
  // Scaled curve errors run about 100x below scaled parameter errors; at
  // lambda = 1 the current term barely steers the fit.
  double lambda = 100.0;
  refmodel::ParamRanges ranges = refmodel::default_ranges();
  std::vector<double> vgs_grid = refmodel::BiasSpec::standard().vgs_grid;
  std::uint64_t seed = 0;
  std::vector<std::size_t> mask;
  bool pretrain = true;
  EpochCallback on_epoch;
};

/// Stage seeds derived from the master seed by name.
std::map<std::string, std::uint64_t> stage_seeds(std::uint64_t master);

struct PipelineResult {
  ForwardModel forward;
  InverseModel inverse;
  Split split;
  std::vector<StageResult> stages;
  std::map<std::string, std::uint64_t> seeds;
  std::size_t augmented_count = 0;
};

/// Optional upstream artifacts shared between runs on the same data.
struct PipelineReuse {
  const ForwardModel* forward = nullptr;
  const AugmentedSet* augmented = nullptr;
};

/// Forward stage only: fits feature scaling on the training split and trains
/// the surrogate. The returned network is frozen.
ForwardModel train_forward(const PhysicsSet& data, const Split& split, const PipelineConfig& cfg,
                           StageResult* result = nullptr);

/// Fresh inverse network sharing the surrogate's scaling records.
InverseModel init_inverse(const ForwardModel& fwd, const PipelineConfig& cfg);

/// Tandem pretraining on surrogate data, with its own dev split.
StageResult pretrain_inverse(InverseModel& inv, const ForwardModel& fwd, const AugmentedSet& aug,
                             const PipelineConfig& cfg);

/// Tandem training on physics data: the finetune preset after pretraining,
/// the no_pretrain preset otherwise.
StageResult finetune_inverse(InverseModel& inv, const ForwardModel& fwd, const PhysicsSet& data, const Split& split,
                             const PipelineConfig& cfg, bool pretrained);

/// forward -> augment -> pretrain -> finetune, or forward -> no_pretrain when
/// cfg.pretrain is false. Stage failures are rethrown with the stage name.
PipelineResult run_pipeline(const PhysicsSet& data, const PipelineConfig& cfg, const PipelineReuse& reuse = {});

/// One row per (size, repeat, arm) plus aggregated means and deviations.
struct BootstrapRow {
  std::size_t size = 0;
  bool pretrain = true;
  std::vector<double> median, q10, q5;  ///< one entry per repeat
  double mean_median = 0, std_median = 0, mean_q10 = 0, std_q10 = 0, mean_q5 = 0, std_q5 = 0;
};

struct BootstrapOptions {
  std::vector<std::size_t> sizes;
  std::size_t repeats = 5;
  bool compare_no_pretrain = false;
  refmodel::BiasSpec bias = refmodel::BiasSpec::standard();
  refmodel::PhysicalConstants constants{};
};

/// Each repeat draws a subset from `pool`, reinitializes every network from a
/// fresh seed, runs the pipeline and evaluates on `test` by resimulation.
std::vector<BootstrapRow> bootstrap_run(const PhysicsSet& pool, const PhysicsSet& test, const PipelineConfig& base,
                                        const BootstrapOptions& opt);

/// Sample mean and standard deviation (n - 1 denominator; 0 for n < 2).
void mean_std(const std::vector<double>& x, double& mean, double& sd);

}  // namespace fetinv::training
