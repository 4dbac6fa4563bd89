#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rrag {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Collapses every whitespace run to a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);

// Lowercase + whitespace-collapsed form used for answer-string containment.
std::string normalize_for_match(std::string_view s);

// True when `needle` occurs in `haystack` after normalize_for_match on both.
// Numeric needles ("12,500", "1889") are additionally matched with thousands
// separators stripped from both sides.
bool contains_answer(std::string_view haystack, std::string_view needle);

// True for strings like "1889", "12,500", "3.14" (digits with optional
// commas/decimal point).
bool looks_numeric(std::string_view s);

// Removes ',' characters; helper for thousands-separator-insensitive matching.
std::string strip_commas(std::string_view s);

std::vector<std::string> split(std::string_view s, std::string_view sep);

// Naive sentence splitter on '.', '!', '?' boundaries; keeps the terminator.
std::vector<std::string> split_sentences(std::string_view text);

bool starts_with(std::string_view s, std::string_view prefix);

} // namespace rrag
