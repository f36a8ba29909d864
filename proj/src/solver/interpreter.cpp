#include "geoformal/solver/interpreter.hpp"

#include <cmath>

namespace geoformal::solver {

DomainError::DomainError(std::string op, std::string reason)
    : Error("domain error in " + op + ": " + reason), op_(std::move(op)) {}

UnboundNumRef::UnboundNumRef(std::size_t index, std::size_t available)
    : Error("N_" + std::to_string(index) + " is unbound (" + std::to_string(available) +
            " numbers given)"),
      index_(index) {}

UnknownConstant::UnknownConstant(std::string name) : Error("unknown constant C_" + name) {}

namespace {

double resolve(const lang::ProgramToken& token, const Bindings& b, std::size_t column) {
  struct Visitor {
    const Bindings& b;
    std::size_t column;
    double operator()(const lang::Literal& t) const { return t.value; }
    double operator()(const lang::NumRef& t) const {
      if (t.index >= b.n_values.size()) throw UnboundNumRef(t.index, b.n_values.size());
      return b.n_values[t.index];
    }
    double operator()(const lang::VarRef& t) const {
      if (t.index >= b.v_values.size()) {
        throw lang::ForwardReference(t.index, b.v_values.size(), column);
      }
      return b.v_values[t.index];
    }
    double operator()(const lang::ConstRef& t) const {
      auto it = b.constants.find(t.name);
      if (it == b.constants.end()) throw UnknownConstant(t.name);
      return it->second;
    }
    double operator()(const lang::OperatorTok&) const {
      throw lang::SyntaxError(1, column, "operand");
    }
  };
  return std::visit(Visitor{b, column}, token);
}

}  // namespace

ExecutionTrace execute_program(const lang::SolutionProgram& program, Bindings& bindings,
                               const OperatorRegistry& registry) {
  if (program.empty()) throw EmptyProgram();
  ExecutionTrace trace;
  std::size_t column = 1;
  for (const auto& group : program.groups()) {
    const auto* spec = registry.find(group.op);
    if (spec == nullptr) throw lang::UnknownOperator(column, std::string(group.op));
    if (spec->arity != group.operands.size()) {
      throw lang::ArityMismatch(spec->name, spec->arity, group.operands.size(), column);
    }
    ExecutionStep step;
    step.op = spec->name;
    for (const auto& operand : group.operands) {
      ++column;
      step.operands.push_back(resolve(operand, bindings, column));
    }
    ++column;
    if (spec->domain) {
      if (auto reason = spec->domain(step.operands); !reason.empty()) {
        throw DomainError(spec->name, reason);
      }
    }
    step.result = spec->apply(step.operands);
    if (!std::isfinite(step.result)) throw DomainError(spec->name, "non-finite result");
    bindings.v_values.push_back(step.result);
    trace.final = step.result;
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

ExecutionTrace execute_text(std::string_view text, Bindings& bindings,
                            const OperatorRegistry& registry) {
  auto program = lang::parse_program(text, registry.arity_lookup(), bindings.v_values.size());
  return execute_program(program, bindings, registry);
}

}  // namespace geoformal::solver
