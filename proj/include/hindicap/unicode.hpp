#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hindicap::unicode {

/// NFC-normalizes UTF-8 text. Invalid sequences are replaced with U+FFFD.
std::string nfc(std::string_view utf8);

/// True for general categories P* (this includes danda and double danda).
bool is_punctuation(char32_t cp);

/// True for general category Nd (ASCII, Devanagari and every other decimal digit).
bool is_decimal_digit(char32_t cp);

bool is_whitespace(char32_t cp);

/// Splits on any Unicode whitespace; empty tokens are dropped.
std::vector<std::string> split_whitespace(std::string_view utf8);

std::u32string to_u32(std::string_view utf8);
std::string to_utf8(std::u32string_view text);

} // namespace hindicap::unicode
