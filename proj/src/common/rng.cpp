#include "surfake/common/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "surfake/common/hash.hpp"

namespace surfake {

std::uint64_t Rng::uniform_below(std::uint64_t bound) {
  // Rejection sampling: discard the top partial block so every residue is
  // equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % bound;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
  std::vector<unsigned char> bytes(8 + stream.size());
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(root >> (8 * i));
  std::copy(stream.begin(), stream.end(), bytes.begin() + 8);
  return sha256_u64(bytes);
}

}  // namespace surfake
