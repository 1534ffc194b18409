#include "lego/core/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace lego {

Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(index), hi(index)};
  return Rng(seq);
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  if (bound == 0) {
    throw std::invalid_argument("uniform_index: empty range");
  }
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
  std::uint64_t draw = rng();
  while (draw > limit) {
    draw = rng();
  }
  return draw % bound;
}

double uniform_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double normal(Rng& rng) {
  double u1 = uniform_real(rng);
  while (u1 <= 0.0) {
    u1 = uniform_real(rng);
  }
  const double u2 = uniform_real(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace lego
