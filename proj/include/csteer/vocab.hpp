#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csteer {

using TokenId = std::int32_t;
using Tokens = std::vector<TokenId>;

// Closed vocabulary of the synthetic referring task. Text form is the
// space-joined token strings; there is no subword tokenizer.
namespace vocab {

enum class Category {
  kSpecial,
  kMarkerOpen,
  kMarkerClose,
  kNumber,
  kLetter,
  kColor,
  kShape,
  kPosition,
  kRelation,
  kWord,
};

inline constexpr int kMaxNumber = 16;

int size();
std::string_view text(TokenId id);
Category category(TokenId id);

// Throws ParseError on unknown words.
TokenId id(std::string_view word);
std::optional<TokenId> find(std::string_view word);

Tokens tokenize(std::string_view text);
std::string detokenize(std::span<const TokenId> tokens);

TokenId number(int n);  // n in [1, kMaxNumber]
int number_value(TokenId id);  // -1 if not a number token
TokenId letter(int index);     // 0..3 -> A..D
int letter_index(TokenId id);  // -1 if not a letter

const std::vector<TokenId>& colors();
const std::vector<TokenId>& shapes();
const std::vector<TokenId>& positions();
const std::vector<TokenId>& relations();

// A marker "[k]" renders as three sub-tokens.
Tokens marker(int k);
bool is_marker_piece(TokenId id);

// Frequently used tokens.
TokenId pad();
TokenId bos();
TokenId eos();
TokenId img_open();
TokenId img_close();
TokenId query();    // "Q:"
TokenId answer();   // "Ans:"
TokenId clause_end();  // ";"
TokenId qmark();
TokenId time_open();
TokenId time_close();
TokenId dash();
TokenId marker_open();
TokenId marker_close();

}  // namespace vocab

// Locates marker occurrences "[ n ]" inside a token span. Each result is the
// index of the opening bracket; the occurrence spans three tokens.
std::vector<std::size_t> find_markers(std::span<const TokenId> tokens);

// Removes every "[ n ]" occurrence.
Tokens strip_markers(std::span<const TokenId> tokens);

}  // namespace csteer
