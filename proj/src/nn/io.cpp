// SPDX-License-Identifier: Apache-2.0
#include "fetinv/nn/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fetinv/error.hpp"

namespace fetinv::nn {
namespace {

constexpr const char* kFormat = "fetinv-weights";

Topology topology_from_string(const std::string& s) {
  if (s == "forward") return Topology::forward;
  if (s == "inverse") return Topology::inverse;
  if (s == "custom") return Topology::custom;
  throw PersistenceError("weights: unknown topology '" + s + "'");
}

LayerKind kind_from_string(const std::string& s) {
  if (s == "dense") return LayerKind::dense;
  if (s == "gru") return LayerKind::gru;
  if (s == "flatten") return LayerKind::flatten;
  throw PersistenceError("weights: unknown layer kind '" + s + "'");
}

const nlohmann::json& field(const nlohmann::json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw PersistenceError(std::string("weights: missing field '") + name + "'");
  return j.at(name);
}

}  // namespace

nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::ordered_json j;
  j["format"] = kFormat;
  j["version"] = kWeightFormatVersion;
  j["topology"] = to_string(c.net.topology());
  j["input"] = {{"steps", c.net.input_shape().steps}, {"features", c.net.input_shape().features}};
  auto layers = nlohmann::ordered_json::array();
  for (const auto& s : c.net.layer_specs()) {
    layers.push_back({{"kind", to_string(s.kind)},
                      {"units", s.units},
                      {"activation", to_string(s.activation)},
                      {"steps", s.steps}});
  }
  j["layers"] = layers;
  j["param_count"] = c.net.param_count();
  j["params"] = c.net.params();
  nlohmann::ordered_json sc = nlohmann::ordered_json::object();
  for (const auto& [name, rec] : c.scaling) sc[name] = rec.to_json();
  j["scaling"] = sc;
  j["meta"] = c.meta;
  return nlohmann::json(j);
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (field(j, "format") != kFormat) throw PersistenceError("weights: field 'format' is not " + std::string(kFormat));
    const int version = field(j, "version").get<int>();
    if (version != kWeightFormatVersion)
      throw PersistenceError("weights: field 'version' is " + std::to_string(version) + ", this build reads " +
                             std::to_string(kWeightFormatVersion) + " (no migration available)");
    const Topology topo = topology_from_string(field(j, "topology").get<std::string>());
    const auto& in = field(j, "input");
    const Shape input{field(in, "steps").get<std::size_t>(), field(in, "features").get<std::size_t>()};
    std::vector<LayerSpec> specs;
    for (const auto& l : field(j, "layers")) {
      LayerSpec s;
      s.kind = kind_from_string(field(l, "kind").get<std::string>());
      s.units = field(l, "units").get<std::size_t>();
      s.activation = activation_from_string(field(l, "activation").get<std::string>());
      s.steps = field(l, "steps").get<std::size_t>();
      specs.push_back(s);
    }
    Checkpoint c;
    c.net = Network(topo, input, specs);
    const auto count = field(j, "param_count").get<std::size_t>();
    const auto& params = field(j, "params");
    if (count != c.net.param_count() || params.size() != count)
      throw PersistenceError("weights: field 'params' has " + std::to_string(params.size()) +
                             " values, topology needs " + std::to_string(c.net.param_count()));
    auto& w = c.net.params();
    for (std::size_t i = 0; i < count; ++i) w[i] = params[i].get<double>();
    for (const auto& [name, rec] : field(j, "scaling").items()) c.scaling[name] = features::ScalingRecord::from_json(rec);
    if (j.contains("meta")) c.meta = j.at("meta");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw PersistenceError(std::string("weights: malformed field: ") + e.what());
  } catch (const ContractError& e) {
    throw PersistenceError(std::string("weights: inconsistent layer stack: ") + e.what());
  }
}

void save_weights(const std::string& path, const Checkpoint& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw PersistenceError("cannot write weights: " + tmp);
    os << checkpoint_to_json(c).dump() << '\n';
    if (!os) throw PersistenceError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw PersistenceError("cannot move weights into place: " + path);
}

Checkpoint load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PersistenceError("cannot open weights: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw PersistenceError("weights: " + path + " is not valid JSON (truncated?): " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace fetinv::nn
