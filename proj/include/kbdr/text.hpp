#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kbdr {

/// Lowercase, trim, and collapse internal whitespace runs to one space.
/// Used as the identity key for entity names and synonyms.
std::string normalize(std::string_view text);

/// Lowercases ASCII and splits on every ASCII character that is not a letter
/// or digit. Bytes >= 0x80 are kept inside tokens so UTF-8 words survive.
std::vector<std::string> tokenize(std::string_view text);

/// True iff `phrase` occurs in `tokens` as a contiguous run. An empty phrase
/// never matches.
bool contains_phrase(std::span<const std::string> tokens, std::span<const std::string> phrase);

/// Tokens of a document's title and abstract, kept apart so that a phrase
/// never matches across the boundary.
struct TokenizedText {
    std::vector<std::string> title;
    std::vector<std::string> body;

    bool empty() const { return title.empty() && body.empty(); }
    bool contains(std::span<const std::string> phrase) const {
        return contains_phrase(title, phrase) || contains_phrase(body, phrase);
    }
};

TokenizedText tokenize_document(std::string_view title, std::string_view abstract_text);

}  // namespace kbdr
