#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace prefpo::text {

/// Decodes UTF-8; each byte of an invalid sequence becomes U+FFFD.
std::u32string decode_utf8(std::string_view s);

/// Number of Unicode scalar values (invalid bytes count once each).
std::size_t count_code_points(std::string_view s);

/// Whitespace as understood by Python's str.split(): ASCII whitespace,
/// separators 0x1c-0x1f, NEL, NBSP and the Unicode Zs/Zl/Zp code points.
bool is_space(char32_t c) noexcept;

/// Letters and digits. Non-ASCII code points count as letters unless they
/// fall in a punctuation, symbol or separator block.
bool is_word_char(char32_t c) noexcept;

/// Maximal runs of non-whitespace, returned as UTF-8 slices of `s`.
std::vector<std::string_view> split_whitespace(std::string_view s);

std::string ascii_lower(std::string_view s);
constexpr char ascii_lower(char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

std::string_view trim(std::string_view s) noexcept;
std::string_view rtrim(std::string_view s) noexcept;

/// Splits on '\n'; a trailing '\r' on each line is dropped.
std::vector<std::string_view> lines(std::string_view s);

}  // namespace prefpo::text
