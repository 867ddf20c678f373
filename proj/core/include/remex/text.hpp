#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace remex {

/// Lowercases, splits on non-alphanumeric characters, drops empty tokens.
/// This is the single tokenization rule shared by indexing, retrieval,
/// lexical similarity, and answer scoring.
std::vector<std::string> tokenize(std::string_view text);

/// Open-domain QA answer normalization: lowercase, strip punctuation,
/// drop English articles (a, an, the), collapse whitespace.
std::string normalize_answer(std::string_view text);

/// Term-frequency vector over tokenize(text).
std::unordered_map<std::string, double> term_frequencies(std::string_view text);

std::string to_lower(std::string s);
std::string trim(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace remex
