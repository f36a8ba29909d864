#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace geoformal::tensor {

/// Counter-based generator: the n-th draw is a pure function of
/// (key, n), and `split` derives independent child streams from labels, so
/// identical (seed, label path, counter) always give identical values.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::string_view label) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, one value per two uniforms).
  double normal();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, int) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace geoformal::tensor
