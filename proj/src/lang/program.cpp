#include "geoformal/lang/program.hpp"

#include <array>
#include <charconv>
#include <cmath>

#include "lexer.hpp"

namespace geoformal::lang {

UnknownOperator::UnknownOperator(std::size_t column, std::string name)
    : DataError("unknown operator '" + name + "' at column " + std::to_string(column)),
      column_(column),
      name_(std::move(name)) {}

ArityMismatch::ArityMismatch(std::string op, std::size_t expected, std::size_t found,
                             std::size_t column)
    : DataError("operator '" + op + "' expects " + std::to_string(expected) +
                " operands, found " + std::to_string(found) + " (column " +
                std::to_string(column) + ")"),
      op_(std::move(op)),
      expected_(expected),
      found_(found),
      column_(column) {}

ForwardReference::ForwardReference(std::size_t index, std::size_t available,
                                   std::size_t column)
    : DataError("V_" + std::to_string(index) + " referenced at column " +
                std::to_string(column) + " but only " + std::to_string(available) +
                " results exist"),
      index_(index),
      available_(available),
      column_(column) {}

namespace {

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

bool is_identifier(std::string_view w) {
  if (w.empty() || !is_ident_start(w[0])) return false;
  for (char c : w) {
    if (!is_ident_char(c)) return false;
  }
  return true;
}

std::optional<std::size_t> parse_index(std::string_view digits) {
  if (digits.empty() || digits.size() > 9) return std::nullopt;
  if (digits.size() > 1 && digits[0] == '0') return std::nullopt;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
  return value;
}

std::optional<double> parse_literal(std::string_view w) {
  if (w.empty()) return std::nullopt;
  const char first = w[0];
  if (!(first == '-' || first == '.' || (first >= '0' && first <= '9'))) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), value);
  if (ec != std::errc() || ptr != w.data() + w.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

bool is_operand(const ProgramToken& t) { return !std::holds_alternative<OperatorTok>(t); }

// Validates the token stream and returns the index of each group's operator.
std::vector<std::size_t> validate(const std::vector<ProgramToken>& tokens,
                                  const std::vector<std::size_t>& columns,
                                  const ArityLookup& arity, std::size_t prior_results) {
  std::vector<std::size_t> starts;
  std::size_t available = prior_results;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const auto* op = std::get_if<OperatorTok>(&tokens[i]);
    if (op == nullptr) {
      // An operand where an operator belongs: the previous group has too
      // many operands, or the program does not start with an operator.
      if (starts.empty()) throw SyntaxError(1, columns[i], "operator");
      const auto& prev = std::get<OperatorTok>(tokens[starts.back()]);
      const std::size_t expected = *arity(prev.name);
      std::size_t found = expected;
      while (i + (found - expected) < tokens.size() &&
             is_operand(tokens[i + (found - expected)])) {
        ++found;
      }
      throw ArityMismatch(prev.name, expected, found, columns[i]);
    }
    auto n = arity(op->name);
    if (!n) throw UnknownOperator(columns[i], op->name);
    starts.push_back(i);
    std::size_t found = 0;
    while (found < *n && i + 1 + found < tokens.size() && is_operand(tokens[i + 1 + found])) {
      const auto& operand = tokens[i + 1 + found];
      if (const auto* v = std::get_if<VarRef>(&operand); v && v->index >= available) {
        throw ForwardReference(v->index, available, columns[i + 1 + found]);
      }
      ++found;
    }
    if (found < *n) {
      const std::size_t col = i + 1 + found < tokens.size() ? columns[i + 1 + found]
                                                             : columns[i] + op->name.size();
      throw ArityMismatch(op->name, *n, found, col);
    }
    i += 1 + *n;
    ++available;
  }
  return starts;
}

}  // namespace

ProgramToken lex_program_word(std::string_view word, const ArityLookup& arity,
                              std::size_t column) {
  if (word.size() > 2 && word[1] == '_' && (word[0] == 'N' || word[0] == 'V')) {
    auto index = parse_index(word.substr(2));
    if (!index) throw SyntaxError(1, column + 2, "decimal index without leading zeros");
    if (word[0] == 'N') return NumRef{*index};
    return VarRef{*index};
  }
  if (word.size() > 2 && word[0] == 'C' && word[1] == '_') {
    auto name = word.substr(2);
    if (!is_identifier(name)) throw SyntaxError(1, column + 2, "constant name");
    return ConstRef{std::string(name)};
  }
  if (auto value = parse_literal(word)) return Literal{*value};
  if (is_identifier(word)) {
    if (!arity(word)) throw UnknownOperator(column, std::string(word));
    return OperatorTok{std::string(word)};
  }
  throw SyntaxError(1, column, "operator, N_i, V_i, C_NAME or decimal literal");
}

SolutionProgram::SolutionProgram(std::vector<ProgramToken> tokens, const ArityLookup& arity,
                                 std::size_t prior_results)
    : tokens_(std::move(tokens)) {
  std::vector<std::size_t> columns(tokens_.size());
  for (std::size_t i = 0; i < columns.size(); ++i) columns[i] = i + 1;
  group_starts_ = validate(tokens_, columns, arity, prior_results);
}

std::vector<OperatorGroup> SolutionProgram::groups() const {
  std::vector<OperatorGroup> out;
  out.reserve(group_starts_.size());
  for (std::size_t g = 0; g < group_starts_.size(); ++g) {
    const std::size_t start = group_starts_[g];
    const std::size_t end = g + 1 < group_starts_.size() ? group_starts_[g + 1] : tokens_.size();
    out.push_back({std::get<OperatorTok>(tokens_[start]).name,
                   std::span<const ProgramToken>(tokens_).subspan(start + 1, end - start - 1)});
  }
  return out;
}

SolutionProgram parse_program(std::string_view text, const ArityLookup& arity,
                              std::size_t prior_results) {
  std::vector<ProgramToken> tokens;
  std::vector<std::size_t> columns;
  std::size_t offset = 0;
  std::size_t line = 1;
  for (auto line_text : detail::split_lines(text)) {
    for (const auto& w : detail::split_words(line_text)) {
      try {
        tokens.push_back(lex_program_word(w.text, arity, w.column));
      } catch (const SyntaxError& e) {
        throw SyntaxError(line, e.column(), e.expected());
      }
      columns.push_back(offset + w.column);
    }
    offset += line_text.size() + 1;
    ++line;
  }
  // Validate with source columns first so errors point into `text`.
  validate(tokens, columns, arity, prior_results);
  return SolutionProgram(std::move(tokens), arity, prior_results);
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  std::string s(buf.data(), ptr);
  if (s.find('.') != std::string::npos) return s;
  auto e = s.find('e');
  if (e == std::string::npos) return s + ".0";
  return s.substr(0, e) + ".0" + s.substr(e);
}

std::string format_token(const ProgramToken& token) {
  struct Visitor {
    std::string operator()(const OperatorTok& t) const { return t.name; }
    std::string operator()(const Literal& t) const { return format_number(t.value); }
    std::string operator()(const NumRef& t) const { return "N_" + std::to_string(t.index); }
    std::string operator()(const VarRef& t) const { return "V_" + std::to_string(t.index); }
    std::string operator()(const ConstRef& t) const { return "C_" + t.name; }
  };
  return std::visit(Visitor{}, token);
}

std::string format_program(const SolutionProgram& program) {
  std::string out;
  for (const auto& t : program.tokens()) {
    if (!out.empty()) out += ' ';
    out += format_token(t);
  }
  return out;
}

}  // namespace geoformal::lang
