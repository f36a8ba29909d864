#include "geoformal/lang/caption.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "lexer.hpp"

namespace geoformal::lang {

SyntaxError::SyntaxError(std::size_t line, std::size_t column, std::string expected)
    : DataError("syntax error at " + std::to_string(line) + ":" + std::to_string(column) +
                ": expected " + expected),
      line_(line),
      column_(column),
      expected_(std::move(expected)) {}

DuplicatePoint::DuplicatePoint(std::size_t line, std::string label)
    : DataError("duplicate point '" + label + "' on line " + std::to_string(line)),
      line_(line),
      label_(std::move(label)) {}

PointLabel::PointLabel(std::string name) : name_(std::move(name)) {
  if (!is_valid(name_)) {
    throw std::invalid_argument("invalid point label '" + name_ + "'");
  }
}

bool PointLabel::is_valid(std::string_view name) {
  if (name.empty() || name.size() > 3) return false;
  auto upper = [](char c) { return c >= 'A' && c <= 'Z'; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  if (!upper(name[0])) return false;
  return std::all_of(name.begin() + 1, name.end(),
                     [&](char c) { return upper(c) || digit(c); });
}

Relation Relation::collinear(std::vector<PointLabel> points) {
  return Relation{RelationKind::Collinear, std::nullopt, std::move(points)};
}

Relation Relation::concyclic(PointLabel center, std::vector<PointLabel> points) {
  return Relation{RelationKind::Concyclic, std::move(center), std::move(points)};
}

namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

PointLabel expect_label(const detail::Word& w, std::size_t line) {
  if (!PointLabel::is_valid(w.text)) {
    throw SyntaxError(line, w.column, "point label [A-Z][A-Z0-9]{0,2}");
  }
  return PointLabel(std::string(w.text));
}

void check_distinct(const Relation& r, std::size_t line) {
  std::vector<PointLabel> seen;
  if (r.center) seen.push_back(*r.center);
  for (const auto& p : r.points) {
    if (std::find(seen.begin(), seen.end(), p) != seen.end()) {
      throw DuplicatePoint(line, p.str());
    }
    seen.push_back(p);
  }
}

Relation parse_relation_line(const std::vector<detail::Word>& words, std::size_t line,
                             std::size_t line_length) {
  const auto& head = words.front();
  Relation rel;
  std::size_t next = 1;
  if (iequals(head.text, kLineKeyword)) {
    rel.kind = RelationKind::Collinear;
  } else if (head.text == kCircleKeyword || head.text == "\\\\odot") {
    rel.kind = RelationKind::Concyclic;
    if (words.size() < 2) throw SyntaxError(line, line_length + 1, "circle center label");
    rel.center = expect_label(words[1], line);
    if (words.size() < 3) throw SyntaxError(line, line_length + 1, "'lieson'");
    if (words[2].text != kLiesOnKeyword) throw SyntaxError(line, words[2].column, "'lieson'");
    next = 3;
  } else {
    throw SyntaxError(line, head.column, "'Line' or '\\odot'");
  }

  for (std::size_t i = next; i < words.size(); ++i) {
    rel.points.push_back(expect_label(words[i], line));
  }
  const std::size_t min_points = rel.kind == RelationKind::Collinear ? 2 : 1;
  if (rel.points.size() < min_points) {
    throw SyntaxError(line, line_length + 1, "point label");
  }
  check_distinct(rel, line);
  return rel;
}

}  // namespace

FormalCaption parse_caption(std::string_view text) {
  FormalCaption caption;
  std::size_t line_no = 0;
  for (auto line : detail::split_lines(text)) {
    ++line_no;
    auto words = detail::split_words(line);
    if (words.empty()) continue;
    caption.relations.push_back(parse_relation_line(words, line_no, line.size()));
  }
  return caption;
}

std::string format_relation(const Relation& relation) {
  std::string out;
  if (relation.kind == RelationKind::Collinear) {
    out = kLineKeyword;
  } else {
    out = std::string(kCircleKeyword) + " " + relation.center->str() + " " +
          std::string(kLiesOnKeyword);
  }
  for (const auto& p : relation.points) {
    out += ' ';
    out += p.str();
  }
  return out;
}

std::string format_caption(const FormalCaption& caption) {
  std::string out;
  for (std::size_t i = 0; i < caption.relations.size(); ++i) {
    if (i > 0) out += '\n';
    out += format_relation(caption.relations[i]);
  }
  return out;
}

}  // namespace geoformal::lang
