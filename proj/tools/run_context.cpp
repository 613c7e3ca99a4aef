// SPDX-License-Identifier: Apache-2.0
#include "run_context.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "fetinv/error.hpp"
#include "fetinv/refmodel/dataset.hpp"
#include "fetinv/seed.hpp"

namespace fetinv::tool {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool try_create(const fs::path& p) {
  const int fd = ::open(p.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) return false;
    throw PersistenceError("cannot create lock file " + p.string());
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  const ssize_t n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
  if (n != static_cast<ssize_t>(pid.size())) throw PersistenceError("cannot write lock file " + p.string());
  return true;
}

bool owner_alive(const fs::path& p) {
  std::ifstream is(p);
  long pid = 0;
  if (!(is >> pid) || pid <= 0) return true;  // unreadable: assume a live writer mid-creation
  return ::kill(static_cast<pid_t>(pid), 0) == 0 || errno == EPERM;
}

}  // namespace

DirLock::DirLock(const fs::path& dir) : path_(dir / kFileName) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw PersistenceError("cannot create output directory " + dir.string() + ": " + ec.message());
  if (try_create(path_)) return;
  if (owner_alive(path_)) throw LockError("output directory " + dir.string() + " is locked by another run (" +
                                          path_.string() + ")");
  fs::remove(path_, ec);
  if (!try_create(path_)) throw LockError("output directory " + dir.string() + " is locked by another run");
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const LockError*>(&e)) return kExitLocked;
  const auto* err = dynamic_cast<const Error*>(&e);
  if (!err) return kExitInternal;
  switch (err->kind()) {
    case ErrorKind::config: return kExitConfig;
    case ErrorKind::input:
    case ErrorKind::model_domain: return kExitInput;
    case ErrorKind::numerical: return kExitNumerical;
    case ErrorKind::dependency: return kExitDependency;
    case ErrorKind::persistence: return kExitPersistence;
    case ErrorKind::contract: return kExitContract;
  }
  return kExitInternal;
}

std::string file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw PersistenceError("cannot write " + tmp.string());
    os << text;
    if (!os) throw PersistenceError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw PersistenceError("cannot rename " + tmp.string() + ": " + ec.message());
}

Manifest::Manifest(std::string command, std::vector<std::string> argv, const cli::RunConfig& cfg) {
  j_["tool"] = "fetinv";
  j_["manifest_version"] = 1;
  j_["generator_version"] = refmodel::kGeneratorVersion;
  j_["command"] = std::move(command);
  j_["argv"] = std::move(argv);
  j_["started_utc"] = utc_now();
  j_["seed"] = cfg.seed;
  nlohmann::ordered_json seeds;
  for (const auto& [k, v] : training::stage_seeds(cfg.seed)) seeds[k] = v;
  j_["stage_seeds"] = seeds;
  j_["config"] = cli::config_to_json(cfg);
}

void Manifest::add_input(const std::string& role, const std::string& path) {
  inputs_[role] = {{"path", path}, {"fnv1a64", file_hash(path)}};
}

void Manifest::add_output(const std::string& path) { outputs_.push_back(path); }

void Manifest::add_stage(const training::StageResult& r) {
  stages_.push_back({{"stage", r.stage},
                     {"epochs", r.total_epochs()},
                     {"epochs_per_step", r.epochs_per_step},
                     {"initial_dev_loss", r.initial_dev_loss},
                     {"best_dev_loss", r.best_dev_loss}});
}

void Manifest::write(const fs::path& out_dir, const std::string& status, const std::string& error) {
  nlohmann::ordered_json j = j_;
  j["finished_utc"] = utc_now();
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  j["inputs"] = inputs_;
  j["outputs"] = outputs_;
  j["stages"] = stages_;
  j["metrics"] = metrics_;
  for (auto it = extra_.begin(); it != extra_.end(); ++it) j[it.key()] = it.value();
  write_text_atomic(out_dir / "manifest.json", j.dump(2) + "\n");
}

}  // namespace fetinv::tool
