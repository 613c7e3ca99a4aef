// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fetinv {

/// Error categories. The CLI maps each category to a distinct exit code.
enum class ErrorKind {
  config,       ///< invalid configuration or parameter ranges
  input,        ///< malformed or out-of-contract user data
  numerical,    ///< quadrature, root finding or training divergence
  model_domain, ///< reference model asked to leave its valid domain
  contract,     ///< API misuse (shape mismatch, frozen network, ...)
  persistence,  ///< unreadable or inconsistent files on disk
  dependency,   ///< a required upstream artifact is missing
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, double residual = 0.0)
      : Error(ErrorKind::numerical, what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class ModelDomainError : public Error {
 public:
  explicit ModelDomainError(const std::string& what) : Error(ErrorKind::model_domain, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

class PersistenceError : public Error {
 public:
  explicit PersistenceError(const std::string& what) : Error(ErrorKind::persistence, what) {}
};

class DependencyError : public Error {
 public:
  explicit DependencyError(const std::string& what) : Error(ErrorKind::dependency, what) {}
};

/// Throws an error of the same kind with `context: ` prepended. Must be
/// called from inside a catch handler; non-library exceptions pass through.
[[noreturn]] void rethrow_with_context(const std::string& context);

}  // namespace fetinv
