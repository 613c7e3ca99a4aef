// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fetinv/eval/metrics.hpp"
#include "fetinv/refmodel/types.hpp"
#include "fetinv/training/pipeline.hpp"

namespace fetinv::cli {

struct DatasetSection {
  std::size_t count = 1000;
  std::uint64_t first_id = 0;
  double max_failure_fraction = 0.01;
};

struct PathSection {
  std::string dataset;              ///< physics training pool (refmodel CSV)
  std::string test_dataset;         ///< held-out refmodel CSV
  std::string forward_checkpoint;   ///< overrides <out>/forward.json
  std::string inverse_checkpoint;   ///< overrides <out>/inverse.json
  std::string surrogate_checkpoint; ///< forward model used by surrogate-mode evaluation
};

struct BootstrapSection {
  std::vector<std::size_t> sizes = {125, 250, 500};
  std::size_t repeats = 5;
  bool compare_no_pretrain = false;
};

struct AblationSection {
  std::size_t repeats = 5;
  std::vector<eval::Ablation> masks = eval::standard_ablations();
};

/// Everything a command needs; defaults reproduce the reference setup.
struct RunConfig {
  std::uint64_t seed = 0;
  unsigned workers = 0;
  refmodel::ParamRanges ranges = refmodel::default_ranges();
  refmodel::BiasSpec bias = refmodel::BiasSpec::standard();
  refmodel::PhysicalConstants constants{};
  nn::ForwardNetConfig forward_net{};
  nn::InverseNetConfig inverse_net{};
  training::StagePresets presets{};
  std::size_t augmented_count = 100000;
  double dev_fraction = 0.2;
  double lambda = 100.0;
  eval::EvalMode eval_mode = eval::EvalMode::resimulate;
  DatasetSection dataset;
  PathSection paths;
  BootstrapSection bootstrap;
  AblationSection ablation;

  void validate() const;
  training::PipelineConfig pipeline() const;
  eval::EvalOptions eval_options() const;
};

/// Strict: unknown keys and wrong types are ConfigErrors naming the key path.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
/// Fully resolved configuration, suitable for the manifest and for reload.
nlohmann::ordered_json config_to_json(const RunConfig& c);

}  // namespace fetinv::cli
