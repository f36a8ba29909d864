#include "geoformal/eval/baseline.hpp"

#include "geoformal/lang/program.hpp"
#include "geoformal/solver/operators.hpp"

namespace geoformal::eval {

std::string random_program(tensor::Rng& rng, std::size_t n_numbers, std::size_t max_groups) {
  static constexpr double kLiterals[] = {1.0, 2.0, 3.0, 4.0, 90.0, 180.0, 360.0};
  const auto& reg = solver::standard_registry();
  const auto names = reg.names();
  const std::size_t groups = 1 + rng.index(std::max<std::size_t>(1, max_groups));
  std::string text;
  for (std::size_t g = 0; g < groups; ++g) {
    const auto& op = names[rng.index(names.size())];
    text += (text.empty() ? "" : " ") + op;
    for (std::size_t a = 0; a < *reg.arity(op); ++a) {
      const std::size_t kind = rng.index(8);
      std::string operand;
      if (kind < 4 && n_numbers > 0) {
        operand = "N_" + std::to_string(rng.index(n_numbers));
      } else if (kind < 6 && g > 0) {
        operand = "V_" + std::to_string(rng.index(g));
      } else if (kind == 6) {
        operand = "C_PI";
      } else {
        operand = lang::format_number(kLiterals[rng.index(std::size(kLiterals))]);
      }
      text += " " + operand;
    }
  }
  return text;
}

std::vector<solver::CandidateRecord> random_candidates(const std::vector<solver::ProblemRecord>& problems,
                                                       std::size_t beam, tensor::Rng rng) {
  std::vector<solver::CandidateRecord> out;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    tensor::Rng r = rng.split(i);
    solver::CandidateRecord c{problems[i].id, {}, {}};
    for (std::size_t b = 0; b < beam; ++b) c.candidates.push_back(random_program(r, problems[i].numbers.size()));
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace geoformal::eval
