#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nl2sql {

struct Token {
  std::string text;   // normalized (lowercased)
  std::string gloss;  // original surface form
};

// Rule-based tokenizer: whitespace-delimited tokens, lowercased. Joining the
// normalized tokens with single spaces reproduces normalize_text(s), so a
// copied token span always matches a normalized cell value.
std::vector<Token> tokenize_with_gloss(std::string_view s);
std::vector<std::string> tokenize(std::string_view s);

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end);

}  // namespace nl2sql
