// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fetinv/cli/config.hpp"
#include "fetinv/training/train.hpp"

namespace fetinv::tool {

/// Process exit codes, one per error category.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitInput = 3,
  kExitNumerical = 4,
  kExitDependency = 5,
  kExitPersistence = 6,
  kExitLocked = 7,
  kExitContract = 8,
};

/// Thrown when another process holds the output directory.
class LockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exclusive lock on an output directory via an O_EXCL lock file holding the
/// owner's pid. A lock left by a dead process is taken over.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

  static constexpr const char* kFileName = ".fetinv.lock";

 private:
  std::filesystem::path path_;
};

/// Accumulates the run manifest and writes it to <out>/manifest.json.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv, const cli::RunConfig& cfg);

  void add_input(const std::string& role, const std::string& path);
  void add_output(const std::string& path);
  void add_stage(const training::StageResult& r);
  nlohmann::ordered_json& metrics() { return metrics_; }
  nlohmann::ordered_json& extra() { return extra_; }

  /// status is "ok" or "failed"; error is empty on success.
  void write(const std::filesystem::path& out_dir, const std::string& status, const std::string& error);

 private:
  nlohmann::ordered_json j_;
  nlohmann::ordered_json inputs_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json outputs_ = nlohmann::ordered_json::array();
  nlohmann::ordered_json stages_ = nlohmann::ordered_json::array();
  nlohmann::ordered_json metrics_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
};

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e) noexcept;

/// Hex FNV-1a 64 of a file's bytes.
std::string file_hash(const std::string& path);

/// Writes `text` to path via a temporary file and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace fetinv::tool
