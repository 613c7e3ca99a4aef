// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "run_context.hpp"

using namespace fetinv::tool;

namespace {

void add_common(CLI::App* sub, CommonArgs& c) {
  sub->add_option("--config", c.config, "JSON run configuration (strict; defaults when omitted)")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "master seed, overrides the config");
  sub->add_option("--out", c.out, "output directory")->required();
  sub->add_flag("-v,--verbose", c.verbose, "log every epoch");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fetinv: parameter extraction for Schottky-barrier 2D FETs"};
  app.require_subcommand(1);
  CommonArgs common;
  common.argv.assign(argv, argv + argc);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-dataset", "simulate a synthetic device dataset");
  add_common(g, common);
  g->add_option("--count", gen.count, "number of devices");
  g->add_option("--first-id", gen.first_id, "id of the first device");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the forward surrogate and the inverse network");
  add_common(t, common);
  t->add_option("--stage", tr.stage, "stage selector")
      ->check(CLI::IsMember({"forward", "pretrain", "finetune", "all", "no-pretrain"}));
  t->add_option("--dataset", tr.dataset, "training dataset CSV");

  ExtractArgs ex;
  auto* e = app.add_subcommand("extract", "extract parameters from measured or simulated curves");
  add_common(e, common);
  e->add_option("--input", ex.input, "measured (device_id,vds,vgs,id) or dataset CSV")->required();
  e->add_option("--checkpoint", ex.checkpoint, "inverse checkpoint");
  e->add_flag("--resimulate", ex.resimulate, "also write curves simulated from the extracted parameters");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "simulate transfer curves for a parameter table");
  add_common(s, common);
  s->add_option("--params", sim.params, "parameter CSV with one column per parameter")->required();

  EvaluateArgs ev;
  auto* v = app.add_subcommand("evaluate", "score an inverse checkpoint on a test dataset");
  add_common(v, common);
  v->add_option("--checkpoint", ev.checkpoint, "inverse checkpoint");
  v->add_option("--test", ev.test, "test dataset CSV");
  v->add_option("--mode", ev.mode, "resimulate or surrogate")->check(CLI::IsMember({"resimulate", "surrogate"}));
  v->add_option("--surrogate", ev.surrogate, "forward checkpoint used in surrogate mode");

  StudyArgs boot;
  auto* b = app.add_subcommand("bootstrap", "retrain on random subsets of several sizes");
  add_common(b, common);
  b->add_option("--dataset", boot.dataset, "pool dataset CSV");
  b->add_option("--test", boot.test, "test dataset CSV");
  b->add_option("--repeats", boot.repeats, "repeats per size");
  b->add_option("--sizes", boot.sizes, "subset sizes");

  StudyArgs abl;
  auto* a = app.add_subcommand("ablate", "retrain with feature columns removed");
  add_common(a, common);
  a->add_option("--dataset", abl.dataset, "training dataset CSV");
  a->add_option("--test", abl.test, "test dataset CSV");
  a->add_option("--repeats", abl.repeats, "repeats per ablation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (g->parsed()) return cmd_gen_dataset(common, gen);
    if (t->parsed()) return cmd_train(common, tr);
    if (e->parsed()) return cmd_extract(common, ex);
    if (s->parsed()) return cmd_simulate(common, sim);
    if (v->parsed()) return cmd_evaluate(common, ev);
    if (b->parsed()) return cmd_bootstrap(common, boot);
    if (a->parsed()) return cmd_ablate(common, abl);
  } catch (const std::exception& err) {
    std::cerr << "fetinv: error: " << err.what() << '\n';
    return exit_code_for(err);
  }
  return kExitInternal;
}
