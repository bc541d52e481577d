#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace enlg::text {

/// NFC-normalizes, collapses whitespace runs to one space, trims both ends.
/// Throws FormatError on invalid UTF-8.
std::string normalize(std::string_view input);

/// Unicode-aware lowercase (root locale).
std::string lowercase(std::string_view input);

/// Splits on ASCII/Unicode whitespace, dropping empty pieces.
std::vector<std::string> split_words(std::string_view input);

}  // namespace enlg::text
