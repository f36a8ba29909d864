#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "geoformal/lang/caption.hpp"

namespace geoformal::lang {

class UnknownOperator : public DataError {
 public:
  UnknownOperator(std::size_t column, std::string name);
  std::size_t column() const { return column_; }
  const std::string& name() const { return name_; }

 private:
  std::size_t column_;
  std::string name_;
};

/// An operator group has the wrong number of operands, e.g. a bare
/// `g_equal` with nothing after it.
class ArityMismatch : public DataError {
 public:
  ArityMismatch(std::string op, std::size_t expected, std::size_t found, std::size_t column);
  const std::string& op() const { return op_; }
  std::size_t expected() const { return expected_; }
  std::size_t found() const { return found_; }
  std::size_t column() const { return column_; }

 private:
  std::string op_;
  std::size_t expected_;
  std::size_t found_;
  std::size_t column_;
};

/// `V_i` used before operator group i has produced it.
class ForwardReference : public DataError {
 public:
  ForwardReference(std::size_t index, std::size_t available, std::size_t column);
  std::size_t index() const { return index_; }
  std::size_t available() const { return available_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t index_;
  std::size_t available_;
  std::size_t column_;
};

struct OperatorTok {
  std::string name;
  friend bool operator==(const OperatorTok&, const OperatorTok&) = default;
};
struct Literal {
  double value = 0.0;
  friend bool operator==(const Literal&, const Literal&) = default;
};
/// `N_i`: the i-th number given in the problem text.
struct NumRef {
  std::size_t index = 0;
  friend bool operator==(const NumRef&, const NumRef&) = default;
};
/// `V_i`: the result of the i-th executed operator group.
struct VarRef {
  std::size_t index = 0;
  friend bool operator==(const VarRef&, const VarRef&) = default;
};
/// `C_<NAME>`: a named constant such as `C_PI`.
struct ConstRef {
  std::string name;
  friend bool operator==(const ConstRef&, const ConstRef&) = default;
};

using ProgramToken = std::variant<OperatorTok, Literal, NumRef, VarRef, ConstRef>;

/// Returns the arity of a known operator, or nothing.
using ArityLookup = std::function<std::optional<std::size_t>(std::string_view)>;

struct OperatorGroup {
  std::string_view op;
  std::span<const ProgramToken> operands;
};

/// A validated flat prefix program: every operator is followed by exactly
/// its arity of operands, and every `V_i` names an earlier result.
class SolutionProgram {
 public:
  SolutionProgram() = default;

  /// Validates `tokens`; throws the same errors as parse_program.
  SolutionProgram(std::vector<ProgramToken> tokens, const ArityLookup& arity,
                  std::size_t prior_results = 0);

  const std::vector<ProgramToken>& tokens() const { return tokens_; }
  bool empty() const { return tokens_.empty(); }
  std::vector<OperatorGroup> groups() const;

  friend bool operator==(const SolutionProgram&, const SolutionProgram&) = default;

 private:
  std::vector<ProgramToken> tokens_;
  std::vector<std::size_t> group_starts_;
};

/// Parses whitespace-separated program text such as `g_minus N_0 N_1`.
/// `prior_results` is the number of `V_i` slots already bound by earlier
/// programs (zero for a standalone program).
SolutionProgram parse_program(std::string_view text, const ArityLookup& arity,
                              std::size_t prior_results = 0);

std::string format_program(const SolutionProgram& program);
std::string format_token(const ProgramToken& token);

/// Shortest round-trip decimal that always contains a `.`, e.g. `5.0`, `0.25`.
std::string format_number(double value);

/// Classifies one program word without validating arity.
/// Throws SyntaxError or UnknownOperator.
ProgramToken lex_program_word(std::string_view word, const ArityLookup& arity,
                              std::size_t column = 1);

}  // namespace geoformal::lang
