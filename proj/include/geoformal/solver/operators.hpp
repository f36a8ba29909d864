#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoformal/lang/program.hpp"
#include "geoformal/lang/vocab.hpp"

namespace geoformal::solver {

using Semantics = std::function<double(std::span<const double>)>;
/// Returns an empty string when the operands are in the domain, otherwise a
/// short reason.
using DomainCheck = std::function<std::string(std::span<const double>)>;

struct OperatorSpec {
  std::string name;
  std::size_t arity = 1;
  Semantics apply;
  DomainCheck domain;  // may be empty: total on all reals
};

/// Name-keyed operator table. Immutable once built; new operators are added
/// through `add` before the registry is shared.
class OperatorRegistry {
 public:
  OperatorRegistry() = default;

  /// Throws std::invalid_argument on a duplicate name or zero arity.
  OperatorRegistry& add(OperatorSpec spec);

  const OperatorSpec* find(std::string_view name) const;
  std::optional<std::size_t> arity(std::string_view name) const;
  lang::ArityLookup arity_lookup() const;

  /// Registration order.
  const std::vector<OperatorSpec>& specs() const { return specs_; }
  std::vector<std::string> names() const;

 private:
  std::vector<OperatorSpec> specs_;
  std::map<std::string, std::size_t, std::less<>> by_name_;
};

/// The fixed 16-operator table. Notable conventions:
///   g_minus(a, b)     = |a - b|
///   gougu_minus(a, b) = sqrt(|a^2 - b^2|)
///   PRK_Perim(a, n)   = a * n   (side length times side count)
///   g_sin/g_cos/g_tan take degrees
const OperatorRegistry& standard_registry();

std::vector<OperatorSpec> operator_table();

/// Named constants addressable as `C_<NAME>`.
const std::map<std::string, double, std::less<>>& standard_constants();

/// parse_program against the standard registry.
lang::SolutionProgram parse_program(std::string_view text, std::size_t prior_results = 0);

/// Vocabulary over the standard registry's operator names.
const lang::Vocab& standard_vocab();

}  // namespace geoformal::solver
