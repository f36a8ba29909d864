#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geoformal/error.hpp"

namespace geoformal::lang {

/// Raised for any text that does not conform to the caption or program
/// grammar. Line and column are 1-based.
class SyntaxError : public DataError {
 public:
  SyntaxError(std::size_t line, std::size_t column, std::string expected);

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  const std::string& expected() const { return expected_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string expected_;
};

class DuplicatePoint : public DataError {
 public:
  DuplicatePoint(std::size_t line, std::string label);
  std::size_t line() const { return line_; }
  const std::string& label() const { return label_; }

 private:
  std::size_t line_;
  std::string label_;
};

/// A point name such as `A`, `O` or `B1`: `[A-Z][A-Z0-9]{0,2}`.
class PointLabel {
 public:
  /// Throws std::invalid_argument when `name` is not a valid label.
  explicit PointLabel(std::string name);

  static bool is_valid(std::string_view name);

  const std::string& str() const { return name_; }

  friend bool operator==(const PointLabel&, const PointLabel&) = default;
  friend auto operator<=>(const PointLabel&, const PointLabel&) = default;

 private:
  std::string name_;
};

enum class RelationKind { Collinear, Concyclic };

/// One caption line. Point order is meaningful (left to right for lines,
/// clockwise for circles) and is never normalized.
struct Relation {
  RelationKind kind = RelationKind::Collinear;
  std::optional<PointLabel> center;
  std::vector<PointLabel> points;

  static Relation collinear(std::vector<PointLabel> points);
  static Relation concyclic(PointLabel center, std::vector<PointLabel> points);

  friend bool operator==(const Relation&, const Relation&) = default;
};

struct FormalCaption {
  std::vector<Relation> relations;

  friend bool operator==(const FormalCaption&, const FormalCaption&) = default;
};

inline constexpr std::string_view kLineKeyword = "Line";
inline constexpr std::string_view kCircleKeyword = "\\odot";
inline constexpr std::string_view kLiesOnKeyword = "lieson";

/// Parses newline-separated relation lines:
///
///     Line A E D
///     \odot O lieson A C D B
///
/// `line` is accepted case-insensitively and `\\odot` (doubled backslash, as
/// found in LaTeX-escaped sources) is accepted for `\odot`. Blank lines are
/// skipped.
FormalCaption parse_caption(std::string_view text);

/// Canonical text, one relation per line, no trailing newline.
std::string format_caption(const FormalCaption& caption);

std::string format_relation(const Relation& relation);

}  // namespace geoformal::lang
