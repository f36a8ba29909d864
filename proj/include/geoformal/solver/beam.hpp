#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoformal/lang/program.hpp"
#include "geoformal/solver/interpreter.hpp"

namespace geoformal::solver {

/// A prediction passes iff |pred - gt| <= max(abs, rel * |gt|).
struct Tolerance {
  double abs = 1e-2;
  double rel = 1e-3;

  /// Throws std::invalid_argument when both bounds are zero or one is negative.
  void validate() const;
  bool accepts(double pred, double gt) const;

  friend bool operator==(const Tolerance&, const Tolerance&) = default;
};

/// Index of the choice nearest to `result`; ties go to the lowest index.
/// Throws std::invalid_argument on an empty choice list.
std::size_t resolve_choice(double result, std::span<const double> choices);

struct CandidateResult {
  std::string text;                              // as produced by the decoder
  std::optional<lang::SolutionProgram> program;  // set when it parsed
  std::optional<double> value;                   // set when it executed
  std::string error;                             // set when it failed

  bool executed() const { return value.has_value(); }
};

struct BeamOutcome {
  std::vector<CandidateResult> candidates;  // decoder rank order
  std::optional<std::size_t> first_executed;
  std::optional<std::size_t> first_correct;
};

/// Executes every candidate in rank order against a fresh copy of
/// `bindings`. Failures are recorded, never raised.
BeamOutcome evaluate_beam(std::span<const std::string> candidates, const Bindings& bindings,
                          double gt_answer, const Tolerance& tol,
                          const OperatorRegistry& registry = standard_registry());

}  // namespace geoformal::solver
