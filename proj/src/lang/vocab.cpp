#include "geoformal/lang/vocab.hpp"

#include <array>
#include <fstream>

#include "geoformal/lang/caption.hpp"
#include "lexer.hpp"

namespace geoformal::lang {

OutOfVocab::OutOfVocab(std::string token)
    : DataError("token not in vocabulary: '" + token + "'"), token_(std::move(token)) {}

namespace {

constexpr std::string_view kContinuation = "##";
constexpr std::string_view kPieceChars = "0123456789.-+e";

constexpr std::array<std::string_view, 51> kQuestionWords = {
    "in",     "triangle", "right",    "legs",   "leg",     "hypotenuse", "find",
    "the",    "length",   "of",       "perimeter", "regular", "polygon", "side",
    "sides",  "angle",    "angles",   "are",    "and",     "circle",     "radius",
    "area",   "with",     "center",   "is",     "supplementary", "to",   "what",
    "third",  "other",    "on",       "line",   "degrees", "given",      "point",
    "lies",   "number",   "rectangle", "width", "height",  "diameter",   "each",
    "has",    "a",        "an",       "if",     "then",    "=",          ",",
    "?",      "how"};

bool is_piece_word(std::string_view w) {
  if (w.empty()) return false;
  const char c = w[0];
  if (!(c == '-' || c == '.' || (c >= '0' && c <= '9'))) return false;
  return w.find_first_not_of(kPieceChars) == std::string_view::npos;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const std::array<std::string_view, 4> specials = {kPadToken, kBosToken, kEosToken, kSepToken};
  if (tokens_.size() < specials.size()) throw DataError("vocabulary lacks special tokens");
  for (std::size_t i = 0; i < specials.size(); ++i) {
    if (tokens_[i] != specials[i]) {
      throw DataError("vocabulary id " + std::to_string(i) + " must be " +
                      std::string(specials[i]));
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos) {
      throw DataError("invalid vocabulary token at id " + std::to_string(i));
    }
    if (!index_.emplace(t, static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary token '" + t + "'");
    }
  }
}

bool Vocab::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) throw OutOfVocab(std::string(token));
  return it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw OutOfVocab("<id " + std::to_string(id) + ">");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::span<const std::string_view> question_words() { return kQuestionWords; }

Vocab make_standard_vocab(std::span<const std::string> operator_names) {
  std::vector<std::string> t = {std::string(kPadToken), std::string(kBosToken),
                                std::string(kEosToken), std::string(kSepToken)};
  t.emplace_back(kLineKeyword);
  t.emplace_back(kCircleKeyword);
  t.emplace_back(kLiesOnKeyword);
  for (char c = 'A'; c <= 'Z'; ++c) t.emplace_back(1, c);
  for (int i = 0; i < 10; ++i) t.push_back("N_" + std::to_string(i));
  for (int i = 0; i < 10; ++i) t.push_back("V_" + std::to_string(i));
  t.emplace_back("C_PI");
  for (char c : kPieceChars) t.emplace_back(1, c);
  for (char c : kPieceChars) t.push_back(std::string(kContinuation) + c);
  for (auto w : kQuestionWords) t.emplace_back(w);
  for (const auto& op : operator_names) t.push_back(op);
  return Vocab(std::move(t));
}

std::string canonical_text(std::string_view text) {
  std::string out;
  for (auto line : detail::split_lines(text)) {
    auto words = detail::split_words(line);
    if (words.empty()) continue;
    if (!out.empty()) out += '\n';
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i > 0) out += ' ';
      out += words[i].text;
    }
  }
  return out;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocab& vocab) {
  std::vector<TokenId> ids;
  bool first_line = true;
  for (auto line : detail::split_lines(text)) {
    auto words = detail::split_words(line);
    if (words.empty()) continue;
    if (!first_line) ids.push_back(Vocab::kSep);
    first_line = false;
    for (const auto& w : words) {
      if (w.text.starts_with(kContinuation)) throw OutOfVocab(std::string(w.text));
      if (vocab.contains(w.text)) {
        ids.push_back(vocab.id(w.text));
        continue;
      }
      if (!is_piece_word(w.text)) throw OutOfVocab(std::string(w.text));
      std::vector<TokenId> pieces;
      for (std::size_t i = 0; i < w.text.size(); ++i) {
        std::string piece = i == 0 ? std::string(1, w.text[i])
                                   : std::string(kContinuation) + w.text[i];
        if (!vocab.contains(piece)) throw OutOfVocab(std::string(w.text));
        pieces.push_back(vocab.id(piece));
      }
      ids.insert(ids.end(), pieces.begin(), pieces.end());
    }
  }
  return ids;
}

std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab) {
  std::string out;
  bool line_start = true;
  for (TokenId id : ids) {
    if (id == Vocab::kSep) {
      out += '\n';
      line_start = true;
      continue;
    }
    if (id == Vocab::kPad || id == Vocab::kBos || id == Vocab::kEos) continue;
    const auto& tok = vocab.token(id);
    if (tok.starts_with(kContinuation)) {
      out += tok.substr(kContinuation.size());
    } else {
      if (!line_start) out += ' ';
      out += tok;
    }
    line_start = false;
  }
  return out;
}

Vocab read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

void write_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (const auto& t : vocab.tokens()) out << t << '\n';
}

}  // namespace geoformal::lang
