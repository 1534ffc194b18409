#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace lego {

// mt19937_64 and seed_seq are fully specified by the standard; the standard
// distributions are not, so bounded draws and shuffles are done here to keep
// generated data identical across standard libraries.
using Rng = std::mt19937_64;

/// Generator for record `index` of stream `stream` under `seed`.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t index = 0);

/// Uniform integer in [0, bound). bound must be positive.
std::uint64_t uniform_index(Rng& rng, std::uint64_t bound);

/// Uniform double in [0, 1).
double uniform_real(Rng& rng);

/// Standard normal draw (Box-Muller).
double normal(Rng& rng);

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace lego
