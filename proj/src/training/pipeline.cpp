// SPDX-License-Identifier: Apache-2.0
#include "fetinv/training/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "fetinv/error.hpp"
#include "fetinv/eval/metrics.hpp"
#include "fetinv/seed.hpp"

namespace fetinv::training {

using features::ScalingRecord;
using refmodel::DeviceParams;
using refmodel::kNumParams;

namespace {

constexpr std::size_t kInferenceChunk = 512;

std::vector<std::string> column_names() {
  return {features::kColumnNames.begin(), features::kColumnNames.end()};
}

/// Row-chunked inference over a stacked input.
std::vector<double> predict(const nn::Network& net, const std::vector<double>& in, std::size_t n) {
  const nn::Shape is = net.input_shape(), os = net.output_shape();
  std::vector<double> out(n * os.size());
  for (std::size_t b = 0; b < n; b += kInferenceChunk) {
    const std::size_t m = std::min(kInferenceChunk, n - b);
    nn::Batch x(m, is);
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(b * is.size()), m * is.size(), x.data.begin());
    const nn::Batch y = net.forward(x);
    std::copy(y.data.begin(), y.data.end(), out.begin() + static_cast<std::ptrdiff_t>(b * os.size()));
  }
  return out;
}

nlohmann::json mask_json(const std::vector<std::size_t>& mask) { return nlohmann::json(mask); }

const ScalingRecord& scaling_entry(const nn::Checkpoint& c, const char* key) {
  const auto it = c.scaling.find(key);
  if (it == c.scaling.end()) throw PersistenceError(std::string("checkpoint: missing scaling record '") + key + "'");
  return it->second;
}

}  // namespace

PhysicsSet PhysicsSet::subset(const std::vector<std::size_t>& idx) const {
  PhysicsSet s;
  s.ids.reserve(idx.size());
  s.u.reserve(idx.size() * kDeviceFeatures);
  for (std::size_t i : idx) {
    if (i >= size()) throw ContractError("PhysicsSet::subset: index out of range");
    s.ids.push_back(ids[i]);
    if (!params.empty()) s.params.push_back(params[i]);
    s.u.insert(s.u.end(), features(i), features(i) + kDeviceFeatures);
  }
  return s;
}

PhysicsSet make_physics_set(const std::vector<refmodel::DeviceRecord>& records) {
  PhysicsSet s;
  s.ids.reserve(records.size());
  s.params.reserve(records.size());
  s.u.reserve(records.size() * kDeviceFeatures);
  for (const auto& r : records) {
    if (!r.curves.params) throw InputError("device " + std::to_string(r.device_id) + " has no parameters");
    const features::FeatureTensor t = features::build_feature_matrix(r.curves);
    if (t.rows != kGridSteps) throw InputError("device " + std::to_string(r.device_id) + ": grid must have 32 points");
    s.ids.push_back(r.device_id);
    s.params.push_back(*r.curves.params);
    s.u.insert(s.u.end(), t.u.begin(), t.u.end());
  }
  return s;
}

ScalingRecord param_record(const refmodel::ParamRanges& ranges) {
  refmodel::validate_ranges(ranges);
  std::vector<double> lo(kNumParams), hi(kNumParams);
  for (std::size_t k = 0; k < kNumParams; ++k) {
    lo[k] = ranges[k].lower;
    hi[k] = ranges[k].upper;
  }
  return ScalingRecord(lo, hi);
}

std::vector<double> scale_params(const std::vector<DeviceParams>& params, const ScalingRecord& y_rec) {
  std::vector<double> y;
  y.reserve(params.size() * kNumParams);
  for (const auto& p : params) {
    const auto a = p.to_array();
    y.insert(y.end(), a.begin(), a.end());
  }
  y_rec.apply(y.data(), y.size());
  return y;
}

std::vector<DeviceParams> unscale_params(const std::vector<double>& y, const ScalingRecord& y_rec) {
  if (y.size() % kNumParams != 0) throw ContractError("unscale_params: size is not a multiple of 8");
  std::vector<double> raw = y;
  y_rec.invert(raw.data(), raw.size());
  std::vector<DeviceParams> out(raw.size() / kNumParams);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::array<double, kNumParams> a{};
    std::copy_n(raw.begin() + static_cast<std::ptrdiff_t>(i * kNumParams), kNumParams, a.begin());
    out[i] = DeviceParams::from_array(a);
  }
  return out;
}

ScaledSet scale_set(const PhysicsSet& set, const ScalingRecord& u_rec, const ScalingRecord& y_rec,
                    const std::vector<std::size_t>& mask) {
  if (u_rec.slices() != features::kFeatureColumns) throw ContractError("scale_set: feature record needs 8 slices");
  if (set.params.size() != set.size()) throw ContractError("scale_set: every device needs parameters");
  ScaledSet s;
  s.u = set.u;
  u_rec.apply(s.u.data(), s.u.size());
  s.v.resize(set.size() * kDeviceCurves);
  for (std::size_t r = 0; r < set.size() * kGridSteps; ++r)
    std::copy_n(s.u.begin() + static_cast<std::ptrdiff_t>(r * features::kFeatureColumns), features::kCurveChannels,
                s.v.begin() + static_cast<std::ptrdiff_t>(r * features::kCurveChannels));
  features::ablate_columns(s.u, mask);
  s.y = scale_params(set.params, y_rec);
  return s;
}

std::vector<double> ForwardModel::predict_curves(const std::vector<DeviceParams>& params) const {
  std::vector<double> v = predict(net, scale_params(params, y_rec), params.size());
  u_rec.subset({0, 1, 2, 3}).invert(v.data(), v.size());
  return v;
}

nn::Checkpoint ForwardModel::checkpoint() const {
  nn::Checkpoint c{net, {{"u", u_rec}, {"y", y_rec}}, {{"role", "forward"}}};
  return c;
}

ForwardModel ForwardModel::from_checkpoint(const nn::Checkpoint& c) {
  if (c.net.topology() != nn::Topology::forward) throw ContractError("checkpoint does not hold a forward network");
  ForwardModel m{c.net, scaling_entry(c, "u"), scaling_entry(c, "y")};
  m.net.set_frozen(true);
  return m;
}

std::vector<DeviceParams> InverseModel::extract(const std::vector<double>& u_engineered) const {
  if (u_engineered.size() % kDeviceFeatures != 0) throw ContractError("extract: input is not a stack of 32x8 matrices");
  std::vector<double> u = u_engineered;
  u_rec.apply(u.data(), u.size());
  features::ablate_columns(u, mask);
  return unscale_params(predict(net, u, u.size() / kDeviceFeatures), y_rec);
}

nn::Checkpoint InverseModel::checkpoint() const {
  nn::Checkpoint c{net, {{"u", u_rec}, {"y", y_rec}}, {{"role", "inverse"}, {"mask", mask_json(mask)}}};
  return c;
}

InverseModel InverseModel::from_checkpoint(const nn::Checkpoint& c) {
  if (c.net.topology() != nn::Topology::inverse) throw ContractError("checkpoint does not hold an inverse network");
  InverseModel m{c.net, scaling_entry(c, "u"), scaling_entry(c, "y"), {}};
  if (c.meta.contains("mask")) {
    try {
      m.mask = c.meta.at("mask").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception&) {
      throw PersistenceError("checkpoint: field 'meta.mask' is malformed");
    }
  }
  return m;
}

std::vector<double> surrogate_features(const std::vector<double>& curves, std::size_t count,
                                       const std::vector<double>& vgs_grid) {
  if (curves.size() != count * kDeviceCurves || vgs_grid.size() != kGridSteps)
    throw ContractError("surrogate_features: shape mismatch");
  const double log_floor = std::log10(features::kNoiseFloor);
  std::vector<double> u(count * kDeviceFeatures);
  features::GridCurves g;
  g.stage = features::Stage::floored;
  g.vds = {0.1, 1.0};
  g.vgs = vgs_grid;
  g.linear.resize(2 * kGridSteps);
  g.logspace.resize(2 * kGridSteps);
  for (std::size_t d = 0; d < count; ++d) {
    const double* c = curves.data() + d * kDeviceCurves;
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < kGridSteps; ++k) {
        g.linear[i * kGridSteps + k] = std::max(c[k * 4 + i], features::kNoiseFloor);
        g.logspace[i * kGridSteps + k] = std::pow(10.0, std::max(c[k * 4 + 2 + i], log_floor));
      }
    const features::FeatureTensor t = features::engineer_features(g);
    std::copy(t.u.begin(), t.u.end(), u.begin() + static_cast<std::ptrdiff_t>(d * kDeviceFeatures));
  }
  return u;
}

AugmentedSet generate_augmented(const ForwardModel& fwd, const refmodel::ParamRanges& ranges, std::size_t count,
                                std::uint64_t seed) {
  AugmentedSet a;
  if (count == 0) return a;
  std::vector<DeviceParams> params(count);
  for (std::size_t i = 0; i < count; ++i) params[i] = refmodel::sample_params(ranges, derive_seed(seed, "augment", i));
  a.y = scale_params(params, fwd.y_rec);
  a.v = predict(fwd.net, a.y, count);
  std::vector<double> curves = a.v;
  fwd.u_rec.subset({0, 1, 2, 3}).invert(curves.data(), curves.size());
  a.u = surrogate_features(curves, count, refmodel::BiasSpec::standard().vgs_grid);
  fwd.u_rec.apply(a.u.data(), a.u.size());
  return a;
}

std::map<std::string, std::uint64_t> stage_seeds(std::uint64_t master) {
  std::map<std::string, std::uint64_t> s;
  for (const char* name : {"split", "forward_init", "forward", "augment", "augment_split", "inverse_init", "pretrain",
                           "finetune", "no_pretrain"})
    s[name] = derive_seed(master, name);
  return s;
}

ForwardModel train_forward(const PhysicsSet& data, const Split& split, const PipelineConfig& cfg,
                           StageResult* result) {
  const auto seeds = stage_seeds(cfg.seed);
  ForwardModel m;
  try {
    const PhysicsSet train = data.subset(split.train);
    m.u_rec = ScalingRecord::fit(train.u, features::kFeatureColumns, column_names());
    m.y_rec = param_record(cfg.ranges);
    m.net = nn::make_forward_net(cfg.forward_net);
    m.net.init(seeds.at("forward_init"));
    const ScaledSet sc = scale_set(data, m.u_rec, m.y_rec);
    ForwardObjective obj(m.net, sc.y, sc.v);
    TrainPlan plan = cfg.presets.forward;
    plan.seed = seeds.at("forward");
    StageResult r = train_stage(obj, split.train, split.dev, plan, "forward", cfg.on_epoch);
    if (result) *result = std::move(r);
  } catch (...) {
    rethrow_with_context("stage forward");
  }
  m.net.set_frozen(true);
  return m;
}

InverseModel init_inverse(const ForwardModel& fwd, const PipelineConfig& cfg) {
  InverseModel inv;
  inv.u_rec = fwd.u_rec;
  inv.y_rec = fwd.y_rec;
  inv.mask = cfg.mask;
  inv.net = nn::make_inverse_net(cfg.inverse_net);
  inv.net.init(stage_seeds(cfg.seed).at("inverse_init"));
  return inv;
}

StageResult pretrain_inverse(InverseModel& inv, const ForwardModel& fwd, const AugmentedSet& aug,
                             const PipelineConfig& cfg) {
  const auto seeds = stage_seeds(cfg.seed);
  try {
    if (aug.size() < 2) throw ConfigError("augmented set needs at least 2 devices");
    std::vector<double> u = aug.u;
    features::ablate_columns(u, inv.mask);
    const Split split = make_split(aug.size(), cfg.dev_fraction, seeds.at("augment_split"));
    TandemObjective obj(inv.net, fwd.net, u, aug.y, aug.v, cfg.lambda);
    TrainPlan plan = cfg.presets.pretrain;
    plan.seed = seeds.at("pretrain");
    return train_stage(obj, split.train, split.dev, plan, "pretrain", cfg.on_epoch);
  } catch (...) {
    rethrow_with_context("stage pretrain");
  }
}

StageResult finetune_inverse(InverseModel& inv, const ForwardModel& fwd, const PhysicsSet& data, const Split& split,
                             const PipelineConfig& cfg, bool pretrained) {
  const char* stage = pretrained ? "finetune" : "no_pretrain";
  try {
    const ScaledSet sc = scale_set(data, inv.u_rec, inv.y_rec, inv.mask);
    TandemObjective obj(inv.net, fwd.net, sc.u, sc.y, sc.v, cfg.lambda);
    TrainPlan plan = pretrained ? cfg.presets.finetune : cfg.presets.no_pretrain;
    plan.seed = stage_seeds(cfg.seed).at(stage);
    return train_stage(obj, split.train, split.dev, plan, stage, cfg.on_epoch);
  } catch (...) {
    rethrow_with_context(std::string("stage ") + stage);
  }
}

PipelineResult run_pipeline(const PhysicsSet& data, const PipelineConfig& cfg, const PipelineReuse& reuse) {
  if (data.size() < 50) throw ConfigError("pipeline needs at least 50 physics devices, got " + std::to_string(data.size()));
  if (cfg.forward_net.n_params != kNumParams || cfg.inverse_net.n_params != kNumParams)
    throw ConfigError("network parameter width must be 8");
  PipelineResult res;
  res.seeds = stage_seeds(cfg.seed);
  res.split = make_split(data.size(), cfg.dev_fraction, res.seeds.at("split"));

  if (reuse.forward) {
    res.forward = *reuse.forward;
    if (!res.forward.net.frozen()) throw ContractError("reused surrogate must be frozen");
  } else {
    StageResult r;
    res.forward = train_forward(data, res.split, cfg, &r);
    res.stages.push_back(std::move(r));
  }
  const ForwardModel& fwd = res.forward;
  res.inverse = init_inverse(fwd, cfg);
  if (cfg.pretrain) {
    AugmentedSet local;
    const AugmentedSet* aug = reuse.augmented;
    if (!aug) {
      try {
        local = generate_augmented(fwd, cfg.ranges, cfg.augmented_count, res.seeds.at("augment"));
      } catch (...) {
        rethrow_with_context("stage augment");
      }
      aug = &local;
    }
    res.augmented_count = aug->size();
    res.stages.push_back(pretrain_inverse(res.inverse, fwd, *aug, cfg));
  }
  res.stages.push_back(finetune_inverse(res.inverse, fwd, data, res.split, cfg, cfg.pretrain));
  return res;
}

void mean_std(const std::vector<double>& x, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (x.empty()) return;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  if (x.size() < 2) return;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
}

std::vector<BootstrapRow> bootstrap_run(const PhysicsSet& pool, const PhysicsSet& test, const PipelineConfig& base,
                                        const BootstrapOptions& opt) {
  if (opt.sizes.empty()) throw ConfigError("bootstrap: no training sizes given");
  if (opt.repeats < 1) throw ConfigError("bootstrap: repeats must be >= 1");
  for (std::size_t n : opt.sizes)
    if (n > pool.size())
      throw ConfigError("bootstrap: size " + std::to_string(n) + " exceeds the dataset (" + std::to_string(pool.size()) + ")");

  eval::EvalOptions eopt;
  eopt.bias = opt.bias;
  eopt.constants = opt.constants;
  eopt.ranges = base.ranges;

  std::vector<BootstrapRow> rows;
  for (std::size_t n : opt.sizes) {
    BootstrapRow with{n, true, {}, {}, {}}, without{n, false, {}, {}, {}};
    for (std::size_t rep = 0; rep < opt.repeats; ++rep) {
      const std::uint64_t key = static_cast<std::uint64_t>(n) * 1000003ULL + rep;
      std::vector<std::size_t> idx = permutation(pool.size(), derive_seed(base.seed, "bootstrap_subset", key));
      idx.resize(n);
      std::sort(idx.begin(), idx.end());
      const PhysicsSet sub = pool.subset(idx);
      PipelineConfig cfg = base;
      cfg.seed = derive_seed(base.seed, "bootstrap_run", key);
      cfg.pretrain = true;
      const PipelineResult pr = run_pipeline(sub, cfg);
      const eval::EvalReport er = eval::evaluate_inverse(pr.inverse, test, eopt);
      with.median.push_back(er.r2.q50);
      with.q10.push_back(er.r2.q10);
      with.q5.push_back(er.r2.q5);
      if (opt.compare_no_pretrain) {
        cfg.pretrain = false;
        const PipelineResult nr = run_pipeline(sub, cfg, {&pr.forward, nullptr});
        const eval::EvalReport ner = eval::evaluate_inverse(nr.inverse, test, eopt);
        without.median.push_back(ner.r2.q50);
        without.q10.push_back(ner.r2.q10);
        without.q5.push_back(ner.r2.q5);
      }
    }
    for (BootstrapRow* r : {&with, &without}) {
      if (r->median.empty()) continue;
      mean_std(r->median, r->mean_median, r->std_median);
      mean_std(r->q10, r->mean_q10, r->std_q10);
      mean_std(r->q5, r->mean_q5, r->std_q5);
      rows.push_back(*r);
    }
  }
  return rows;
}

}  // namespace fetinv::training
