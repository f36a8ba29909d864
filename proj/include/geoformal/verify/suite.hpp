#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace geoformal::verify {

struct CheckResult {
  std::string module;
  std::string name;
  bool passed = false;
  std::string detail;  // failure reason, or a short measured value
};

/// Outcome of a verification suite. The JSON form holds no timings, so it is
/// byte-stable for a given seed and build.
struct SuiteReport {
  std::string suite;
  std::uint64_t seed = 0;
  std::vector<CheckResult> checks;

  std::size_t failed() const;
  bool ok() const { return failed() == 0; }
  nlohmann::json to_json() const;
};

/// Backprop against central differences for every differentiable op at
/// `points` random inputs each; an op passes when its largest relative error
/// is below `tol`.
SuiteReport run_gradcheck(std::uint64_t seed, double tol = 1e-3, int points = 5);

/// Invariants of every module on seeded random instances.
SuiteReport run_selftest(std::uint64_t seed);

}  // namespace geoformal::verify
