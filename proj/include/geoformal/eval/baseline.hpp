#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "geoformal/solver/problem.hpp"
#include "geoformal/tensor/rng.hpp"

namespace geoformal::eval {

/// A random well-formed program of 1..max_groups operator groups over the
/// standard registry. Operands are N_i (i < n_numbers), earlier V_i, C_PI
/// or small literals.
std::string random_program(tensor::Rng& rng, std::size_t n_numbers, std::size_t max_groups = 4);

/// `beam` random programs per problem: the chance-level reference decoder.
std::vector<solver::CandidateRecord> random_candidates(const std::vector<solver::ProblemRecord>& problems,
                                                       std::size_t beam, tensor::Rng rng);

}  // namespace geoformal::eval
