#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lanesim {

using Rng = std::mt19937_64;

/// Independent generator for a named substream of a scenario seed. Toggling
/// draws on one substream never shifts another.
inline Rng make_substream(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

}  // namespace lanesim
