#include "geoformal/tensor/rng.hpp"

#include <cmath>
#include <numbers>

namespace geoformal::tensor {

namespace {

std::uint64_t mix(std::uint64_t z) {
  // SplitMix64 finalizer.
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Rng::Rng(std::uint64_t seed) : key_(mix(seed)) {}

Rng Rng::split(std::string_view label) const { return Rng(mix(key_ ^ mix(fnv1a(label))), 0); }

Rng Rng::split(std::uint64_t index) const {
  return Rng(mix(key_ ^ mix(index + 0x5851f42d4c957f2dULL)), 0);
}

std::uint64_t Rng::next_u64() { return mix(key_ + mix(counter_++)); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
  // n is small everywhere this is used; modulo bias is below 2^-40.
  return static_cast<std::size_t>(next_u64() % n);
}

}  // namespace geoformal::tensor
