// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "fetinv/features/scaling.hpp"
#include "fetinv/nn/network.hpp"

namespace fetinv::nn {

inline constexpr int kWeightFormatVersion = 1;

struct Checkpoint {
  Network net;
  std::map<std::string, features::ScalingRecord> scaling;
  nlohmann::json meta = nlohmann::json::object();
};

/// JSON container: format tag, version, topology, input shape, layer specs,
/// flat parameter array, scaling records and free-form metadata. Doubles
/// are written in shortest round-trip form, so a reload is bit-exact.
nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

/// Written to a temporary file and renamed into place.
void save_weights(const std::string& path, const Checkpoint& c);
/// Throws PersistenceError naming the offending field.
Checkpoint load_weights(const std::string& path);

}  // namespace fetinv::nn
