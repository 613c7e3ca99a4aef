// SPDX-License-Identifier: Apache-2.0
#include "fetinv/seed.hpp"

namespace fetinv {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view name, std::uint64_t index) noexcept {
  const std::uint64_t stream = splitmix64(master ^ fnv1a64(name));
  return splitmix64(stream + 0x9e3779b97f4a7c15ULL * index);
}

}  // namespace fetinv
