// Tokenization and rule-based sentence splitting over UTF-8 text.
// All offsets are Unicode scalar-value (code point) offsets.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ntee {

inline std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    char32_t cp;
    std::size_t len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1f;
      len = 2;
    } else if ((c >> 4) == 0xe) {
      cp = c & 0x0f;
      len = 3;
    } else if ((c >> 3) == 0x1e) {
      cp = c & 0x07;
      len = 4;
    } else {
      throw std::invalid_argument("invalid UTF-8 lead byte at byte " + std::to_string(i));
    }
    if (i + len > s.size()) throw std::invalid_argument("truncated UTF-8 sequence at byte " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) throw std::invalid_argument("invalid UTF-8 continuation at byte " + std::to_string(i + k));
      cp = (cp << 6) | (cc & 0x3f);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff))
      throw std::invalid_argument("invalid UTF-8 scalar value at byte " + std::to_string(i));
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline void append_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

inline std::string encode_utf8(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t cp : s) append_utf8(cp, out);
  return out;
}

/// Number of code points in a UTF-8 string.
inline std::size_t utf8_length(std::string_view s) { return decode_utf8(s).size(); }

/// ASCII-only case folding; other code points pass through unchanged.
inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

inline bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v' || c == 0xa0 ||
         (c >= 0x2000 && c <= 0x200b) || c == 0x3000;
}

inline bool is_punct(char32_t c) {
  if (c < 0x80) return (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) || (c >= 0x5b && c <= 0x60) ||
                       (c >= 0x7b && c <= 0x7e);
  return c == 0xa1 || c == 0xab || c == 0xbb || c == 0xbf || (c >= 0x2010 && c <= 0x2027) ||
         (c >= 0x2030 && c <= 0x205e) || (c >= 0x3001 && c <= 0x3003);
}

struct Token {
  std::string text;  // lowercased
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Lowercased maximal runs of word characters (neither space nor punctuation)
/// with their code point spans.
inline std::vector<Token> tokenize_spans(std::u32string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i]) || is_punct(text[i])) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i]) && !is_punct(text[i])) ++i;
    tokens.push_back({to_lower(encode_utf8(text.substr(start, i - start))), start, i});
  }
  return tokens;
}

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize_spans(decode_utf8(text))) out.push_back(std::move(t.text));
  return out;
}

using Span = std::pair<std::size_t, std::size_t>;

/// Splits after '.', '!' or '?' when followed by whitespace and then an ASCII
/// uppercase letter or digit. Spans are contiguous and cover the whole text;
/// trailing whitespace belongs to the preceding span.
inline std::vector<Span> split_sentences(std::u32string_view text) {
  std::vector<Span> spans;
  if (text.empty()) return spans;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != U'.' && text[i] != U'!' && text[i] != U'?') continue;
    std::size_t j = i + 1;
    while (j < text.size() && is_space(text[j])) ++j;
    if (j == i + 1 || j >= text.size()) continue;
    const char32_t next = text[j];
    if ((next >= U'A' && next <= U'Z') || (next >= U'0' && next <= U'9')) {
      spans.emplace_back(begin, j);
      begin = j;
      i = j - 1;
    }
  }
  spans.emplace_back(begin, text.size());
  return spans;
}

inline std::vector<Span> split_sentences(std::string_view text) { return split_sentences(decode_utf8(text)); }

}  // namespace ntee
