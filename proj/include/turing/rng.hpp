#ifndef TURING_RNG_HPP
#define TURING_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace turing {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed for the named sub-stream of a run seed. All randomness in a run flows
// through these so that adding a consumer never shifts another one's draws.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (const char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(derive_seed(seed, stream));
}

inline int random_sign(Rng& rng) {
  return (rng() >> 63) != 0 ? 1 : -1;
}

}  // namespace turing

#endif  // TURING_RNG_HPP
