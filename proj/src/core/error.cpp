// SPDX-License-Identifier: Apache-2.0
#include "fetinv/error.hpp"

namespace fetinv {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::input: return "input";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::model_domain: return "model-domain";
    case ErrorKind::contract: return "contract";
    case ErrorKind::persistence: return "persistence";
    case ErrorKind::dependency: return "dependency";
  }
  return "unknown";
}

void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const Error& e) {
    const std::string msg = context + ": " + e.what();
    switch (e.kind()) {
      case ErrorKind::config: throw ConfigError(msg);
      case ErrorKind::input: throw InputError(msg);
      case ErrorKind::numerical: throw NumericalError(msg);
      case ErrorKind::model_domain: throw ModelDomainError(msg);
      case ErrorKind::contract: throw ContractError(msg);
      case ErrorKind::persistence: throw PersistenceError(msg);
      case ErrorKind::dependency: throw DependencyError(msg);
    }
    throw;
  }
}

}  // namespace fetinv
