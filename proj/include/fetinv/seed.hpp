// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace fetinv {

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// SplitMix64 finaliser.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for a named stream derived from the master seed:
/// splitmix64(master ^ fnv1a64(name)) mixed once more with `index`.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0) noexcept;

}  // namespace fetinv
