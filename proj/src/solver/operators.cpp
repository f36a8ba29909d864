#include "geoformal/solver/operators.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace geoformal::solver {

OperatorRegistry& OperatorRegistry::add(OperatorSpec spec) {
  if (spec.arity == 0) throw std::invalid_argument("operator arity must be >= 1");
  if (by_name_.count(spec.name) != 0) {
    throw std::invalid_argument("duplicate operator '" + spec.name + "'");
  }
  by_name_.emplace(spec.name, specs_.size());
  specs_.push_back(std::move(spec));
  return *this;
}

const OperatorSpec* OperatorRegistry::find(std::string_view name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &specs_[it->second];
}

std::optional<std::size_t> OperatorRegistry::arity(std::string_view name) const {
  const auto* spec = find(name);
  if (spec == nullptr) return std::nullopt;
  return spec->arity;
}

lang::ArityLookup OperatorRegistry::arity_lookup() const {
  return [this](std::string_view name) { return arity(name); };
}

std::vector<std::string> OperatorRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& s : specs_) out.push_back(s.name);
  return out;
}

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

OperatorSpec unary(std::string name, double (*f)(double), DomainCheck domain = {}) {
  return {std::move(name), 1, [f](std::span<const double> x) { return f(x[0]); },
          std::move(domain)};
}

OperatorSpec binary(std::string name, double (*f)(double, double), DomainCheck domain = {}) {
  return {std::move(name), 2, [f](std::span<const double> x) { return f(x[0], x[1]); },
          std::move(domain)};
}

}  // namespace

std::vector<OperatorSpec> operator_table() {
  std::vector<OperatorSpec> t;
  t.push_back(unary("g_equal", [](double x) { return x; }));
  t.push_back(unary("g_double", [](double x) { return 2.0 * x; }));
  t.push_back(unary("g_half", [](double x) { return x / 2.0; }));
  t.push_back(binary("g_add", [](double a, double b) { return a + b; }));
  t.push_back(binary("g_minus", [](double a, double b) { return std::abs(a - b); }));
  t.push_back(binary("g_mul", [](double a, double b) { return a * b; }));
  t.push_back(binary("g_divide", [](double a, double b) { return a / b; },
                     [](std::span<const double> x) {
                       return x[1] == 0.0 ? std::string("division by zero") : std::string();
                     }));
  t.push_back(binary("gougu_add", [](double a, double b) { return std::hypot(a, b); }));
  t.push_back(binary("gougu_minus",
                     [](double a, double b) { return std::sqrt(std::abs(a * a - b * b)); }));
  t.push_back({"Sum", 3, [](std::span<const double> x) { return x[0] + x[1] + x[2]; }, {}});
  t.push_back(binary("PRK_Perim", [](double side, double count) { return side * count; }));
  t.push_back(unary("cal_circle_area", [](double r) { return std::numbers::pi * r * r; }));
  t.push_back(
      unary("cal_circle_perimeter", [](double r) { return 2.0 * std::numbers::pi * r; }));
  t.push_back(unary("g_sin", [](double deg) { return std::sin(deg * kDegToRad); }));
  t.push_back(unary("g_cos", [](double deg) { return std::cos(deg * kDegToRad); }));
  t.push_back(unary("g_tan", [](double deg) { return std::tan(deg * kDegToRad); },
                    [](std::span<const double> x) {
                      // Undefined where cos vanishes: 90 + 180k degrees.
                      const double k = (x[0] - 90.0) / 180.0;
                      return std::abs(k - std::round(k)) < 1e-12 ? std::string("tan at 90 degrees")
                                                                 : std::string();
                    }));
  return t;
}

const OperatorRegistry& standard_registry() {
  static const OperatorRegistry registry = [] {
    OperatorRegistry r;
    for (auto& spec : operator_table()) r.add(std::move(spec));
    return r;
  }();
  return registry;
}

const std::map<std::string, double, std::less<>>& standard_constants() {
  static const std::map<std::string, double, std::less<>> constants = {
      {"PI", 3.141592653589793}};
  return constants;
}

lang::SolutionProgram parse_program(std::string_view text, std::size_t prior_results) {
  return lang::parse_program(text, standard_registry().arity_lookup(), prior_results);
}

const lang::Vocab& standard_vocab() {
  static const lang::Vocab vocab = lang::make_standard_vocab(standard_registry().names());
  return vocab;
}

}  // namespace geoformal::solver
