#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace geoformal::lang::detail {

struct Word {
  std::string_view text;
  std::size_t column;  // 1-based
};

inline bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r'; }

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  if (text.empty()) return lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

inline std::vector<Word> split_words(std::string_view line) {
  std::vector<Word> words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_blank(line[i])) ++i;
    if (i >= line.size()) break;
    std::size_t start = i;
    while (i < line.size() && !is_blank(line[i])) ++i;
    words.push_back({line.substr(start, i - start), start + 1});
  }
  return words;
}

}  // namespace geoformal::lang::detail
