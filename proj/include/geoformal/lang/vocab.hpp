#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geoformal/error.hpp"

namespace geoformal::lang {

using TokenId = std::int32_t;

class OutOfVocab : public DataError {
 public:
  explicit OutOfVocab(std::string token);
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

/// Bidirectional token <-> id map. The special tokens always occupy ids 0-3.
///
/// Numbers that are not whole vocabulary entries are split into character
/// pieces: the first character stands alone and every following character
/// uses the `##` continuation form, so `12.5` becomes `1 ##2 ##. ##5`.
/// Lines are separated by the SEP token.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;

  /// `tokens[i]` gets id i. The first four must be the special tokens.
  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  TokenId id(std::string_view token) const;  // throws OutOfVocab
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kSepToken = "<sep>";

/// Words used by generated question texts.
std::span<const std::string_view> question_words();

/// Specials, caption keywords, point letters, operand slots, digit pieces,
/// question words, then `operator_names` in the given order.
Vocab make_standard_vocab(std::span<const std::string> operator_names);

/// Whitespace-normalized text: non-empty lines, single spaces between words.
std::string canonical_text(std::string_view text);

std::vector<TokenId> tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab);

/// One token per line; line number is the id.
Vocab read_vocab(const std::filesystem::path& path);
void write_vocab(const Vocab& vocab, const std::filesystem::path& path);

}  // namespace geoformal::lang
