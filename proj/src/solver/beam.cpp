#include "geoformal/solver/beam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace geoformal::solver {

void Tolerance::validate() const {
  if (abs < 0.0 || rel < 0.0 || std::isnan(abs) || std::isnan(rel)) {
    throw std::invalid_argument("tolerance bounds must be non-negative");
  }
  if (abs == 0.0 && rel == 0.0) throw std::invalid_argument("tolerance cannot be zero");
}

bool Tolerance::accepts(double pred, double gt) const {
  return std::abs(pred - gt) <= std::max(abs, rel * std::abs(gt));
}

std::size_t resolve_choice(double result, std::span<const double> choices) {
  if (choices.empty()) throw std::invalid_argument("resolve_choice: no choices");
  std::size_t best = 0;
  double best_dist = std::abs(result - choices[0]);
  for (std::size_t k = 1; k < choices.size(); ++k) {
    const double d = std::abs(result - choices[k]);
    if (d < best_dist) {
      best = k;
      best_dist = d;
    }
  }
  return best;
}

BeamOutcome evaluate_beam(std::span<const std::string> candidates, const Bindings& bindings,
                          double gt_answer, const Tolerance& tol,
                          const OperatorRegistry& registry) {
  BeamOutcome outcome;
  for (std::size_t rank = 0; rank < candidates.size(); ++rank) {
    CandidateResult c;
    c.text = candidates[rank];
    try {
      Bindings local = bindings;
      c.program = lang::parse_program(c.text, registry.arity_lookup(), local.v_values.size());
      c.value = execute_program(*c.program, local, registry).final;
    } catch (const std::exception& e) {
      c.value.reset();
      c.error = e.what();
    }
    if (c.executed()) {
      if (!outcome.first_executed) outcome.first_executed = rank;
      if (!outcome.first_correct && tol.accepts(*c.value, gt_answer)) {
        outcome.first_correct = rank;
      }
    }
    outcome.candidates.push_back(std::move(c));
  }
  return outcome;
}

}  // namespace geoformal::solver
