// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fetinv::tool {

struct CommonArgs {
  std::string config;  ///< empty: built-in defaults
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
  std::vector<std::string> argv;
};

struct GenArgs {
  std::optional<std::size_t> count;
  std::optional<std::uint64_t> first_id;
};

struct TrainArgs {
  std::string stage = "all";  ///< forward | pretrain | finetune | all | no-pretrain
  std::string dataset;
};

struct ExtractArgs {
  std::string input;
  std::string checkpoint;
  bool resimulate = false;
};

struct SimulateArgs {
  std::string params;
};

struct EvaluateArgs {
  std::string checkpoint;
  std::string test;
  std::string mode;
  std::string surrogate;
};

struct StudyArgs {
  std::string dataset;
  std::string test;
  std::optional<std::size_t> repeats;
  std::vector<std::size_t> sizes;
};

int cmd_gen_dataset(const CommonArgs& c, const GenArgs& a);
int cmd_train(const CommonArgs& c, const TrainArgs& a);
int cmd_extract(const CommonArgs& c, const ExtractArgs& a);
int cmd_simulate(const CommonArgs& c, const SimulateArgs& a);
int cmd_evaluate(const CommonArgs& c, const EvaluateArgs& a);
int cmd_bootstrap(const CommonArgs& c, const StudyArgs& a);
int cmd_ablate(const CommonArgs& c, const StudyArgs& a);

}  // namespace fetinv::tool
