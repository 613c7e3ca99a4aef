// SPDX-License-Identifier: Apache-2.0
#include "fetinv/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fetinv/error.hpp"

namespace fetinv::cli {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read so that leftovers
// can be reported.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader child(const char* key) {
    seen_.insert(key);
    return Reader(j_.at(key), sub(key));
  }

  void get(const char* key, double& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(sub(key) + " must be a number");
    out = v.get<double>();
  }
  void get(const char* key, bool& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(sub(key) + " must be a boolean");
    out = v.get<bool>();
  }
  void get(const char* key, std::string& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(sub(key) + " must be a string");
    out = v.get<std::string>();
  }
  template <class U>
    requires std::is_unsigned_v<U>
  void get(const char* key, U& out) {
    if (!take(key)) return;
    out = to_unsigned<U>(j_.at(key), sub(key));
  }
  void get(const char* key, std::vector<double>& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(sub(key) + " must be an array of numbers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(sub(key) + " must be an array of numbers");
      out.push_back(e.get<double>());
    }
  }
  void get(const char* key, std::vector<std::size_t>& out) {
    if (!take(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(sub(key) + " must be an array of integers");
    out.clear();
    for (const auto& e : v) out.push_back(to_unsigned<std::size_t>(e, sub(key)));
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown configuration key '" + sub(it.key()) + "'");
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  bool take(const char* key) {
    if (!j_.contains(key)) return false;
    seen_.insert(key);
    return true;
  }
  std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }

  template <class U>
  static U to_unsigned(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return static_cast<U>(v.get<std::uint64_t>());
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<U>(v.get<std::int64_t>());
    throw ConfigError(path + " must be a nonnegative integer");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_plan(Reader r, training::TrainPlan& p) {
  r.get("initial_lr", p.initial_lr);
  r.get("anneal_rate", p.anneal_rate);
  r.get("anneal_steps", p.anneal_steps);
  r.get("max_epochs_per_step", p.max_epochs_per_step);
  r.get("patience", p.patience);
  r.get("minibatch_size", p.minibatch_size);
  r.finish();
}

nlohmann::ordered_json plan_json(const training::TrainPlan& p) {
  return {{"initial_lr", p.initial_lr},         {"anneal_rate", p.anneal_rate},
          {"anneal_steps", p.anneal_steps},     {"max_epochs_per_step", p.max_epochs_per_step},
          {"patience", p.patience},             {"minibatch_size", p.minibatch_size}};
}

}  // namespace

void RunConfig::validate() const {
  refmodel::validate_ranges(ranges);
  constants.validate();
  bias.validate();
  if (bias.n_vgs() != training::kGridSteps) throw ConfigError("bias.vgs_grid must hold exactly 32 gate voltages");
  if (bias.n_vds() != 2 || !(bias.vds_values[0] < bias.vds_values[1]))
    throw ConfigError("bias.vds_values must hold a low and a high drain bias");
  for (const auto* p : {&presets.forward, &presets.pretrain, &presets.finetune, &presets.no_pretrain}) p->validate();
  if (forward_net.dense_width == 0 || forward_net.gru_width == 0) throw ConfigError("network widths must be positive");
  for (auto w : inverse_net.hidden)
    if (w == 0) throw ConfigError("network widths must be positive");
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw ConfigError("training.dev_fraction must lie in (0, 1)");
  if (!(lambda >= 0.0)) throw ConfigError("training.lambda must be >= 0");
  if (!(dataset.max_failure_fraction >= 0.0 && dataset.max_failure_fraction <= 1.0))
    throw ConfigError("dataset.max_failure_fraction must lie in [0, 1]");
  if (bootstrap.repeats == 0 || ablation.repeats == 0) throw ConfigError("repeats must be >= 1");
  for (const auto& a : ablation.masks)
    for (auto c : a.mask)
      if (c >= features::kFeatureColumns) throw ConfigError("ablation mask '" + a.name + "' names a column >= 8");
}

training::PipelineConfig RunConfig::pipeline() const {
  training::PipelineConfig p;
  p.forward_net = forward_net;
  p.inverse_net = inverse_net;
  p.presets = presets;
  p.augmented_count = augmented_count;
  p.dev_fraction = dev_fraction;
  p.lambda = lambda;
  p.ranges = ranges;
  p.vgs_grid = bias.vgs_grid;
  p.seed = seed;
  return p;
}

eval::EvalOptions RunConfig::eval_options() const {
  eval::EvalOptions o;
  o.mode = eval_mode;
  o.bias = bias;
  o.constants = constants;
  o.ranges = ranges;
  o.workers = workers;
  return o;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  Reader top(j, "");
  top.get("seed", c.seed);
  top.get("workers", c.workers);

  if (top.has("ranges")) {
    Reader r = top.child("ranges");
    for (std::size_t k = 0; k < refmodel::kNumParams; ++k) {
      const std::string name(refmodel::kParamNames[k]);
      if (!r.has(name.c_str())) continue;
      Reader p = r.child(name.c_str());
      p.get("lower", c.ranges[k].lower);
      p.get("upper", c.ranges[k].upper);
      p.get("log_space", c.ranges[k].log_space);
      p.finish();
    }
    r.finish();
  }
  if (top.has("bias")) {
    Reader r = top.child("bias");
    r.get("vgs_grid", c.bias.vgs_grid);
    r.get("vds_values", c.bias.vds_values);
    r.finish();
  }
  if (top.has("constants")) {
    Reader r = top.child("constants");
    auto& k = c.constants;
    r.get("k_b_t", k.k_b_t);
    r.get("q", k.q);
    r.get("c_ox", k.c_ox);
    r.get("l_ch", k.l_ch);
    r.get("v_fb", k.v_fb);
    r.get("rho_c0", k.rho_c0);
    r.get("n_floor", k.n_floor);
    r.get("e_min", k.e_min);
    r.get("ef_lo", k.ef_lo);
    r.get("ef_hi", k.ef_hi);
    r.finish();
  }
  if (top.has("networks")) {
    Reader r = top.child("networks");
    if (r.has("forward")) {
      Reader f = r.child("forward");
      f.get("dense_width", c.forward_net.dense_width);
      f.get("gru_width", c.forward_net.gru_width);
      f.finish();
    }
    if (r.has("inverse")) {
      Reader i = r.child("inverse");
      i.get("hidden", c.inverse_net.hidden);
      i.finish();
    }
    r.finish();
  }
  if (top.has("presets")) {
    Reader r = top.child("presets");
    if (r.has("forward")) read_plan(r.child("forward"), c.presets.forward);
    if (r.has("pretrain")) read_plan(r.child("pretrain"), c.presets.pretrain);
    if (r.has("finetune")) read_plan(r.child("finetune"), c.presets.finetune);
    if (r.has("no_pretrain")) read_plan(r.child("no_pretrain"), c.presets.no_pretrain);
    r.finish();
  }
  if (top.has("training")) {
    Reader r = top.child("training");
    r.get("augmented_count", c.augmented_count);
    r.get("dev_fraction", c.dev_fraction);
    r.get("lambda", c.lambda);
    r.finish();
  }
  if (top.has("eval")) {
    Reader r = top.child("eval");
    std::string mode = eval::to_string(c.eval_mode);
    r.get("mode", mode);
    c.eval_mode = eval::eval_mode_from_string(mode);
    r.finish();
  }
  if (top.has("dataset")) {
    Reader r = top.child("dataset");
    r.get("count", c.dataset.count);
    r.get("first_id", c.dataset.first_id);
    r.get("max_failure_fraction", c.dataset.max_failure_fraction);
    r.finish();
  }
  if (top.has("paths")) {
    Reader r = top.child("paths");
    r.get("dataset", c.paths.dataset);
    r.get("test_dataset", c.paths.test_dataset);
    r.get("forward_checkpoint", c.paths.forward_checkpoint);
    r.get("inverse_checkpoint", c.paths.inverse_checkpoint);
    r.get("surrogate_checkpoint", c.paths.surrogate_checkpoint);
    r.finish();
  }
  if (top.has("bootstrap")) {
    Reader r = top.child("bootstrap");
    r.get("sizes", c.bootstrap.sizes);
    r.get("repeats", c.bootstrap.repeats);
    r.get("compare_no_pretrain", c.bootstrap.compare_no_pretrain);
    r.finish();
  }
  if (top.has("ablation")) {
    Reader r = top.child("ablation");
    r.get("repeats", c.ablation.repeats);
    if (r.has("masks")) {
      const json& m = r.raw("masks");
      if (!m.is_array()) throw ConfigError("ablation.masks must be an array");
      c.ablation.masks.clear();
      for (std::size_t i = 0; i < m.size(); ++i) {
        Reader e(m[i], "ablation.masks[" + std::to_string(i) + "]");
        eval::Ablation a;
        e.get("name", a.name);
        e.get("mask", a.mask);
        e.finish();
        if (a.name.empty()) throw ConfigError(e.sub("name") + " must be nonempty");
        c.ablation.masks.push_back(a);
      }
    }
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open configuration file '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("configuration file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  nlohmann::ordered_json ranges;
  for (std::size_t k = 0; k < refmodel::kNumParams; ++k)
    ranges[std::string(refmodel::kParamNames[k])] = {
        {"lower", c.ranges[k].lower}, {"upper", c.ranges[k].upper}, {"log_space", c.ranges[k].log_space}};
  j["ranges"] = ranges;
  j["bias"] = {{"vgs_grid", c.bias.vgs_grid}, {"vds_values", c.bias.vds_values}};
  const auto& k = c.constants;
  j["constants"] = {{"k_b_t", k.k_b_t}, {"q", k.q},           {"c_ox", k.c_ox},   {"l_ch", k.l_ch},
                    {"v_fb", k.v_fb},   {"rho_c0", k.rho_c0}, {"n_floor", k.n_floor}, {"e_min", k.e_min},
                    {"ef_lo", k.ef_lo}, {"ef_hi", k.ef_hi}};
  j["networks"] = {
      {"forward", {{"dense_width", c.forward_net.dense_width}, {"gru_width", c.forward_net.gru_width}}},
      {"inverse", {{"hidden", c.inverse_net.hidden}}}};
  j["presets"] = {{"forward", plan_json(c.presets.forward)},
                  {"pretrain", plan_json(c.presets.pretrain)},
                  {"finetune", plan_json(c.presets.finetune)},
                  {"no_pretrain", plan_json(c.presets.no_pretrain)}};
  j["training"] = {{"augmented_count", c.augmented_count}, {"dev_fraction", c.dev_fraction}, {"lambda", c.lambda}};
  j["eval"] = {{"mode", eval::to_string(c.eval_mode)}};
  j["dataset"] = {{"count", c.dataset.count},
                  {"first_id", c.dataset.first_id},
                  {"max_failure_fraction", c.dataset.max_failure_fraction}};
  j["paths"] = {{"dataset", c.paths.dataset},
                {"test_dataset", c.paths.test_dataset},
                {"forward_checkpoint", c.paths.forward_checkpoint},
                {"inverse_checkpoint", c.paths.inverse_checkpoint},
                {"surrogate_checkpoint", c.paths.surrogate_checkpoint}};
  j["bootstrap"] = {{"sizes", c.bootstrap.sizes},
                    {"repeats", c.bootstrap.repeats},
                    {"compare_no_pretrain", c.bootstrap.compare_no_pretrain}};
  nlohmann::ordered_json masks = nlohmann::ordered_json::array();
  for (const auto& a : c.ablation.masks) masks.push_back({{"name", a.name}, {"mask", a.mask}});
  j["ablation"] = {{"repeats", c.ablation.repeats}, {"masks", masks}};
  return j;
}

}  // namespace fetinv::cli
