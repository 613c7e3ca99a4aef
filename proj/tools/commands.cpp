// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "fetinv/cli/config.hpp"
#include "fetinv/error.hpp"
#include "fetinv/eval/metrics.hpp"
#include "fetinv/features/features.hpp"
#include "fetinv/nn/io.hpp"
#include "fetinv/refmodel/dataset.hpp"
#include "fetinv/refmodel/physics.hpp"
#include "fetinv/training/pipeline.hpp"
#include "run_context.hpp"

namespace fetinv::tool {

namespace fs = std::filesystem;

namespace {

struct Run {
  cli::RunConfig cfg;
  fs::path out;
  Manifest* manifest = nullptr;
  bool verbose = false;

  std::string path(const std::string& name) const { return (out / name).string(); }
  void output(const std::string& p) const { manifest->add_output(fs::path(p).filename().string()); }
};

void log(const std::string& msg) { std::cerr << "fetinv: " << msg << '\n'; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Loads config, locks the output directory and writes the manifest whether
// the body succeeds or not.
int run_command(const std::string& name, const CommonArgs& c, const std::function<void(Run&)>& body) {
  cli::RunConfig cfg = c.config.empty() ? cli::config_from_json(nlohmann::json::object()) : cli::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.out.empty()) throw ConfigError("--out is required");
  const fs::path out(c.out);
  DirLock lock(out);
  Manifest manifest(name, c.argv, cfg);
  if (!c.config.empty()) manifest.add_input("config", c.config);
  Run run{cfg, out, &manifest, c.verbose};
  try {
    body(run);
  } catch (const std::exception& e) {
    manifest.write(out, "failed", e.what());
    throw;
  }
  manifest.write(out, "ok", "");
  return kExitOk;
}

// Falls back to <out>/dataset.csv for the training role.
training::PhysicsSet load_physics(Run& run, const std::string& role, std::string path) {
  if (path.empty() && role == "dataset" && fs::exists(run.out / "dataset.csv")) path = run.path("dataset.csv");
  if (path.empty()) throw DependencyError("no " + role + " file given (command flag or paths." + role + ")");
  if (!fs::exists(path)) throw DependencyError(role + " dataset not found: " + path);
  run.manifest->add_input(role, path);
  return training::make_physics_set(refmodel::read_dataset_csv(path));
}

nn::Checkpoint load_checkpoint(Run& run, const std::string& role, const std::string& path) {
  if (!fs::exists(path)) throw DependencyError("missing upstream checkpoint '" + role + "': " + path);
  run.manifest->add_input(role, path);
  return nn::load_weights(path);
}

void save_checkpoint(Run& run, const std::string& file, nn::Checkpoint c, const training::StageResult* stage) {
  c.meta["seed"] = run.cfg.seed;
  if (stage) {
    c.meta["stage"] = stage->stage;
    c.meta["best_dev_loss"] = stage->best_dev_loss;
  }
  nn::save_weights(run.path(file), c);
  run.output(run.path(file));
}

void write_history(Run& run, const training::StageResult& r) {
  std::ostringstream os;
  os << "epoch,step,lr,train_loss,dev_loss,improved\n";
  for (const auto& e : r.history)
    os << e.epoch << ',' << e.step << ',' << fmt(e.lr) << ',' << fmt(e.train_loss) << ',' << fmt(e.dev_loss) << ','
       << (e.improved ? 1 : 0) << '\n';
  const std::string p = run.path("history_" + r.stage + ".csv");
  write_text_atomic(p, os.str());
  run.output(p);
}

training::PipelineConfig pipeline_config(Run& run) {
  training::PipelineConfig p = run.cfg.pipeline();
  const bool verbose = run.verbose;
  p.on_epoch = [verbose](const std::string& stage, const training::EpochRecord& e) {
    if (verbose || e.epoch % 50 == 0)
      log(stage + " epoch " + std::to_string(e.epoch) + " step " + std::to_string(e.step) + " train " +
          fmt(e.train_loss) + " dev " + fmt(e.dev_loss));
  };
  return p;
}

void record_stage(Run& run, const training::StageResult& r) {
  run.manifest->add_stage(r);
  write_history(run, r);
  log(r.stage + ": " + std::to_string(r.total_epochs()) + " epochs, best dev loss " + fmt(r.best_dev_loss));
}

}  // namespace

int cmd_gen_dataset(const CommonArgs& c, const GenArgs& a) {
  return run_command("gen-dataset", c, [&](Run& run) {
    refmodel::DatasetSpec spec;
    spec.count = a.count.value_or(run.cfg.dataset.count);
    spec.master_seed = run.cfg.seed;
    spec.first_id = a.first_id.value_or(run.cfg.dataset.first_id);
    spec.ranges = run.cfg.ranges;
    spec.bias = run.cfg.bias;
    spec.constants = run.cfg.constants;
    spec.workers = run.cfg.workers;
    const auto ds = refmodel::generate_dataset(spec);

    for (const auto& f : ds.failures) log("device " + std::to_string(f.device_id) + " failed: " + f.message);
    if (!ds.failures.empty()) {
      std::ostringstream os;
      os << "device_id,message\n";
      for (const auto& f : ds.failures) os << f.device_id << ",\"" << f.message << "\"\n";
      write_text_atomic(run.path("failures.csv"), os.str());
      run.output(run.path("failures.csv"));
    }
    run.manifest->metrics()["devices"] = ds.devices.size();
    run.manifest->metrics()["failures"] = ds.failures.size();
    const double frac = spec.count ? static_cast<double>(ds.failures.size()) / static_cast<double>(spec.count) : 0.0;
    if (frac > run.cfg.dataset.max_failure_fraction)
      throw NumericalError(std::to_string(ds.failures.size()) + " of " + std::to_string(spec.count) +
                           " devices failed to simulate (limit " + fmt(100 * run.cfg.dataset.max_failure_fraction) +
                           "%)");
    std::ostringstream csv;
    refmodel::write_dataset_csv(csv, ds.devices);
    write_text_atomic(run.path("dataset.csv"), csv.str());
    write_text_atomic(run.path("dataset_meta.json"), refmodel::dataset_metadata_json(spec, ds.failures.size()) + "\n");
    run.output(run.path("dataset.csv"));
    run.output(run.path("dataset_meta.json"));
    run.manifest->extra()["dataset_hash"] = file_hash(run.path("dataset.csv"));
    log("wrote " + std::to_string(ds.devices.size()) + " devices to " + run.path("dataset.csv"));
  });
}

int cmd_train(const CommonArgs& c, const TrainArgs& a) {
  static const std::set<std::string> kStages{"forward", "pretrain", "finetune", "all", "no-pretrain"};
  if (!kStages.count(a.stage)) throw ConfigError("unknown stage '" + a.stage + "'");
  return run_command("train", c, [&](Run& run) {
    const training::PipelineConfig pcfg = pipeline_config(run);
    const auto seeds = training::stage_seeds(pcfg.seed);
    const training::PhysicsSet data = load_physics(run, "dataset", a.dataset.empty() ? run.cfg.paths.dataset : a.dataset);
    if (data.size() < 50) throw ConfigError("training needs at least 50 devices, got " + std::to_string(data.size()));
    const training::Split split = training::make_split(data.size(), pcfg.dev_fraction, seeds.at("split"));
    run.manifest->extra()["split"] = {{"train", split.train.size()}, {"dev", split.dev.size()}};

    const std::string fwd_path =
        run.cfg.paths.forward_checkpoint.empty() ? run.path("forward.json") : run.cfg.paths.forward_checkpoint;
    const bool stage_all = a.stage == "all";
    std::optional<training::ForwardModel> fwd;
    if (a.stage == "forward" || stage_all) {
      training::StageResult r;
      fwd = training::train_forward(data, split, pcfg, &r);
      record_stage(run, r);
      save_checkpoint(run, "forward.json", fwd->checkpoint(), &r);
    } else {
      fwd = training::ForwardModel::from_checkpoint(load_checkpoint(run, "forward", fwd_path));
    }
    if (a.stage == "forward") return;

    training::InverseModel inv;
    if (a.stage == "pretrain" || stage_all) {
      inv = training::init_inverse(*fwd, pcfg);
      training::AugmentedSet aug;
      try {
        aug = training::generate_augmented(*fwd, pcfg.ranges, pcfg.augmented_count, seeds.at("augment"));
      } catch (...) {
        rethrow_with_context("stage augment");
      }
      run.manifest->metrics()["augmented_count"] = aug.size();
      const auto r = training::pretrain_inverse(inv, *fwd, aug, pcfg);
      record_stage(run, r);
      save_checkpoint(run, "inverse_pretrain.json", inv.checkpoint(), &r);
      if (a.stage == "pretrain") return;
    }
    if (a.stage == "finetune") {
      inv = training::InverseModel::from_checkpoint(
          load_checkpoint(run, "inverse_pretrain", run.path("inverse_pretrain.json")));
    }
    if (a.stage == "no-pretrain") inv = training::init_inverse(*fwd, pcfg);
    const bool pretrained = a.stage != "no-pretrain";
    const auto r = training::finetune_inverse(inv, *fwd, data, split, pcfg, pretrained);
    record_stage(run, r);
    save_checkpoint(run, "inverse.json", inv.checkpoint(), &r);
    run.manifest->metrics()["final_dev_loss"] = r.best_dev_loss;
  });
}

namespace {

struct Extracted {
  std::vector<std::string> ids;
  std::vector<double> u;
  std::vector<std::pair<std::string, std::string>> failures;
};

Extracted read_extract_input(const std::string& path, const refmodel::BiasSpec& bias) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open input " + path);
  std::string header;
  std::getline(is, header);
  is.clear();
  is.seekg(0);
  Extracted ex;
  auto add = [&](const std::string& id, const std::function<features::FeatureTensor()>& build) {
    try {
      const auto t = build();
      ex.ids.push_back(id);
      ex.u.insert(ex.u.end(), t.u.begin(), t.u.end());
    } catch (const InputError& e) {
      ex.failures.emplace_back(id, e.what());
    }
  };
  if (header.rfind("device_id,vds,vgs,", 0) == 0) {
    for (const auto& [id, curves] : features::read_measured_csv(is))
      add(id, [&] { return features::build_feature_matrix(curves, bias); });
  } else {
    for (const auto& rec : refmodel::read_dataset_csv(is))
      add(std::to_string(rec.device_id), [&] { return features::build_feature_matrix(rec.curves); });
  }
  return ex;
}

}  // namespace

int cmd_extract(const CommonArgs& c, const ExtractArgs& a) {
  return run_command("extract", c, [&](Run& run) {
    if (a.input.empty()) throw ConfigError("--input is required");
    const std::string ck = !a.checkpoint.empty()                       ? a.checkpoint
                           : !run.cfg.paths.inverse_checkpoint.empty() ? run.cfg.paths.inverse_checkpoint
                                                                       : run.path("inverse.json");
    const auto inv = training::InverseModel::from_checkpoint(load_checkpoint(run, "inverse", ck));
    run.manifest->add_input("input", a.input);
    const Extracted ex = read_extract_input(a.input, run.cfg.bias);
    for (const auto& [id, msg] : ex.failures) log("device " + id + " skipped: " + msg);
    const auto params = inv.extract(ex.u);

    std::ostringstream os;
    os << "device_id";
    for (auto n : refmodel::kParamNames) os << ',' << n;
    os << '\n';
    for (std::size_t i = 0; i < params.size(); ++i) {
      os << ex.ids[i];
      for (double v : params[i].to_array()) os << ',' << fmt(v);
      os << '\n';
    }
    write_text_atomic(run.path("parameters.csv"), os.str());
    run.output(run.path("parameters.csv"));
    if (!ex.failures.empty()) {
      std::ostringstream f;
      f << "device_id,message\n";
      for (const auto& [id, msg] : ex.failures) f << id << ",\"" << msg << "\"\n";
      write_text_atomic(run.path("extract_failures.csv"), f.str());
      run.output(run.path("extract_failures.csv"));
    }
    if (a.resimulate) {
      std::ostringstream r;
      r << "device_id,vds,vgs,id_uA_per_um\n";
      for (std::size_t i = 0; i < params.size(); ++i) {
        try {
          const auto cv = refmodel::simulate_curves(params[i], run.cfg.bias, run.cfg.constants);
          for (std::size_t v = 0; v < cv.vds.size(); ++v)
            for (std::size_t g = 0; g < cv.vgs.size(); ++g)
              r << ex.ids[i] << ',' << fmt(cv.vds[v]) << ',' << fmt(cv.vgs[g]) << ',' << fmt(cv.at(v, g)) << '\n';
        } catch (const Error& e) {
          log("device " + ex.ids[i] + " refit failed: " + e.what());
        }
      }
      write_text_atomic(run.path("refit_curves.csv"), r.str());
      run.output(run.path("refit_curves.csv"));
    }
    run.manifest->metrics()["extracted"] = params.size();
    run.manifest->metrics()["skipped"] = ex.failures.size();
    log("extracted " + std::to_string(params.size()) + " devices");
  });
}

int cmd_simulate(const CommonArgs& c, const SimulateArgs& a) {
  return run_command("simulate", c, [&](Run& run) {
    if (a.params.empty()) throw ConfigError("--params is required");
    std::ifstream is(a.params);
    if (!is) throw InputError("cannot open " + a.params);
    run.manifest->add_input("params", a.params);
    std::string line;
    if (!std::getline(is, line)) throw InputError("parameter CSV is empty");
    std::vector<std::string> cols;
    {
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cols.push_back(cell);
    }
    std::map<std::string, std::size_t> at;
    for (std::size_t i = 0; i < cols.size(); ++i) at[cols[i]] = i;
    for (auto n : refmodel::kParamNames)
      if (!at.count(std::string(n))) throw InputError("parameter CSV lacks column '" + std::string(n) + "'");
    std::vector<refmodel::DeviceRecord> recs;
    std::size_t row = 0;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      ++row;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() != cols.size()) throw InputError("parameter CSV row " + std::to_string(row) + ": wrong column count");
      auto num = [&](const std::string& s) {
        std::size_t pos = 0;
        double v = 0;
        try {
          v = std::stod(s, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos != s.size() || s.empty())
          throw InputError("parameter CSV row " + std::to_string(row) + ": bad number '" + s + "'");
        return v;
      };
      std::array<double, refmodel::kNumParams> v{};
      for (std::size_t k = 0; k < refmodel::kNumParams; ++k) v[k] = num(cells[at[std::string(refmodel::kParamNames[k])]]);
      refmodel::DeviceRecord r;
      r.device_id = at.count("device_id") ? static_cast<std::uint64_t>(num(cells[at["device_id"]])) : row - 1;
      r.curves = refmodel::simulate_curves(refmodel::DeviceParams::from_array(v), run.cfg.bias, run.cfg.constants);
      r.curves.params = refmodel::DeviceParams::from_array(v);
      recs.push_back(std::move(r));
    }
    std::ostringstream csv;
    refmodel::write_dataset_csv(csv, recs);
    write_text_atomic(run.path("curves.csv"), csv.str());
    run.output(run.path("curves.csv"));
    run.manifest->metrics()["devices"] = recs.size();
  });
}

int cmd_evaluate(const CommonArgs& c, const EvaluateArgs& a) {
  return run_command("evaluate", c, [&](Run& run) {
    const std::string ck = !a.checkpoint.empty()                       ? a.checkpoint
                           : !run.cfg.paths.inverse_checkpoint.empty() ? run.cfg.paths.inverse_checkpoint
                                                                       : run.path("inverse.json");
    const auto inv = training::InverseModel::from_checkpoint(load_checkpoint(run, "inverse", ck));
    const auto test = load_physics(run, "test_dataset", a.test.empty() ? run.cfg.paths.test_dataset : a.test);
    eval::EvalOptions opt = run.cfg.eval_options();
    if (!a.mode.empty()) opt.mode = eval::eval_mode_from_string(a.mode);
    std::optional<training::ForwardModel> sur;
    if (opt.mode == eval::EvalMode::surrogate) {
      const std::string sp = !a.surrogate.empty() ? a.surrogate
                             : !run.cfg.paths.surrogate_checkpoint.empty() ? run.cfg.paths.surrogate_checkpoint
                                                                           : run.path("forward.json");
      sur = training::ForwardModel::from_checkpoint(load_checkpoint(run, "surrogate", sp));
      opt.surrogate = &*sur;
    }
    const eval::EvalReport rep = eval::evaluate_inverse(inv, test, opt);
    std::ostringstream dev, hist;
    eval::write_report_csv(dev, rep);
    eval::write_histogram_csv(hist, rep);
    write_text_atomic(run.path("eval_devices.csv"), dev.str());
    write_text_atomic(run.path("eval_histogram.csv"), hist.str());
    write_text_atomic(run.path("eval_summary.json"), eval::report_summary_json(rep) + "\n");
    for (const char* f : {"eval_devices.csv", "eval_histogram.csv", "eval_summary.json"}) run.output(run.path(f));
    run.manifest->metrics() = nlohmann::ordered_json::parse(eval::report_summary_json(rep));
    log("median R^2 " + fmt(rep.r2.q50) + ", 5th percentile " + fmt(rep.r2.q5) + ", failures " +
        std::to_string(rep.failures.size()));
  });
}

int cmd_bootstrap(const CommonArgs& c, const StudyArgs& a) {
  return run_command("bootstrap", c, [&](Run& run) {
    const auto pool = load_physics(run, "dataset", a.dataset.empty() ? run.cfg.paths.dataset : a.dataset);
    const auto test = load_physics(run, "test_dataset", a.test.empty() ? run.cfg.paths.test_dataset : a.test);
    training::BootstrapOptions opt;
    opt.sizes = a.sizes.empty() ? run.cfg.bootstrap.sizes : a.sizes;
    opt.repeats = a.repeats.value_or(run.cfg.bootstrap.repeats);
    opt.compare_no_pretrain = run.cfg.bootstrap.compare_no_pretrain;
    opt.bias = run.cfg.bias;
    opt.constants = run.cfg.constants;
    const auto rows = training::bootstrap_run(pool, test, pipeline_config(run), opt);
    std::ostringstream os;
    os << "size,pretrain,repeats,mean_median_r2,std_median_r2,mean_q10_r2,std_q10_r2,mean_q5_r2,std_q5_r2\n";
    for (const auto& r : rows)
      os << r.size << ',' << (r.pretrain ? 1 : 0) << ',' << r.median.size() << ',' << fmt(r.mean_median) << ','
         << fmt(r.std_median) << ',' << fmt(r.mean_q10) << ',' << fmt(r.std_q10) << ',' << fmt(r.mean_q5) << ','
         << fmt(r.std_q5) << '\n';
    write_text_atomic(run.path("bootstrap.csv"), os.str());
    run.output(run.path("bootstrap.csv"));
    run.manifest->metrics()["rows"] = rows.size();
  });
}

int cmd_ablate(const CommonArgs& c, const StudyArgs& a) {
  return run_command("ablate", c, [&](Run& run) {
    const auto data = load_physics(run, "dataset", a.dataset.empty() ? run.cfg.paths.dataset : a.dataset);
    const auto test = load_physics(run, "test_dataset", a.test.empty() ? run.cfg.paths.test_dataset : a.test);
    const auto rows = eval::ablation_study(data, test, run.cfg.ablation.masks,
                                           a.repeats.value_or(run.cfg.ablation.repeats), pipeline_config(run),
                                           run.cfg.eval_options());
    std::ostringstream os;
    os << "ablation,mask,repeats,mean_q5_r2,std_q5_r2,mean_param_mse,std_param_mse\n";
    for (const auto& r : rows) {
      std::string mask;
      for (std::size_t i = 0; i < r.mask.size(); ++i) mask += (i ? " " : "") + std::to_string(r.mask[i]);
      os << r.name << ',' << mask << ',' << r.q5.size() << ',' << fmt(r.mean_q5) << ',' << fmt(r.std_q5) << ','
         << fmt(r.mean_mse) << ',' << fmt(r.std_mse) << '\n';
    }
    write_text_atomic(run.path("ablation.csv"), os.str());
    run.output(run.path("ablation.csv"));
    run.manifest->metrics()["rows"] = rows.size();
  });
}

}  // namespace fetinv::tool
