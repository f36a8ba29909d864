#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geoformal/lang/program.hpp"
#include "geoformal/solver/operators.hpp"

namespace geoformal::solver {

/// Operands outside an operator's domain, or a non-finite result.
class DomainError : public Error {
 public:
  DomainError(std::string op, std::string reason);
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

class UnboundNumRef : public Error {
 public:
  UnboundNumRef(std::size_t index, std::size_t available);
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class UnknownConstant : public Error {
 public:
  explicit UnknownConstant(std::string name);
};

/// A program with no operator groups has no answer.
class EmptyProgram : public Error {
 public:
  EmptyProgram() : Error("empty program") {}
};

struct Bindings {
  std::vector<double> n_values;  // N_i
  std::vector<double> v_values;  // V_i, one per executed group
  std::map<std::string, double, std::less<>> constants = standard_constants();

  static Bindings with_numbers(std::vector<double> numbers) {
    Bindings b;
    b.n_values = std::move(numbers);
    return b;
  }
};

struct ExecutionStep {
  std::string op;
  std::vector<double> operands;
  double result = 0.0;
};

struct ExecutionTrace {
  std::vector<ExecutionStep> steps;
  double final = 0.0;
};

/// Runs each operator group in order, appending its result to
/// `bindings.v_values`. Throws DomainError, UnboundNumRef,
/// lang::ForwardReference or UnknownConstant; on error `bindings` holds the
/// results of the groups that completed. An empty program throws EmptyProgram.
ExecutionTrace execute_program(const lang::SolutionProgram& program, Bindings& bindings,
                               const OperatorRegistry& registry = standard_registry());

/// Parses `text` (with the current V slots as prior results) and executes it.
ExecutionTrace execute_text(std::string_view text, Bindings& bindings,
                            const OperatorRegistry& registry = standard_registry());

}  // namespace geoformal::solver
