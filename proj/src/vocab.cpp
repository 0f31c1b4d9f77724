#include "csteer/vocab.hpp"

#include <sstream>
#include <unordered_map>

#include "csteer/error.hpp"

namespace csteer {
namespace vocab {
namespace {

struct Entry {
  std::string text;
  Category category;
};

struct Table {
  std::vector<Entry> entries;
  std::unordered_map<std::string, TokenId> index;
  std::vector<TokenId> colors, shapes, positions, relations;
  TokenId first_number = 0;
  TokenId first_letter = 0;

  TokenId add(std::string text, Category c) {
    const auto id = static_cast<TokenId>(entries.size());
    index.emplace(text, id);
    entries.push_back({std::move(text), c});
    return id;
  }

  Table() {
    for (const char* s : {"<pad>", "<bos>", "<eos>", "<img>", "</img>", "Q:",
                          "Ans:", ";", "?", "<t>", "</t>", "-"}) {
      add(s, Category::kSpecial);
    }
    add("[", Category::kMarkerOpen);
    add("]", Category::kMarkerClose);
    first_number = static_cast<TokenId>(entries.size());
    for (int n = 1; n <= kMaxNumber; ++n) add(std::to_string(n), Category::kNumber);
    first_letter = static_cast<TokenId>(entries.size());
    for (const char* s : {"A", "B", "C", "D"}) add(s, Category::kLetter);
    for (const char* s : {"red", "green", "blue", "yellow", "purple", "orange",
                          "white", "black"}) {
      colors.push_back(add(s, Category::kColor));
    }
    for (const char* s : {"cube", "sphere", "cone", "cylinder", "ring", "star"}) {
      shapes.push_back(add(s, Category::kShape));
    }
    for (const char* s : {"left", "right", "top", "bottom", "center"}) {
      positions.push_back(add(s, Category::kPosition));
    }
    for (const char* s : {"near", "above", "below", "touching"}) {
      relations.push_back(add(s, Category::kRelation));
    }
    for (const char* s : {"color", "shape", "describe", "which", "the", "is",
                          "where"}) {
      add(s, Category::kWord);
    }
  }
};

const Table& table() {
  static const Table t;
  return t;
}

}  // namespace

int size() { return static_cast<int>(table().entries.size()); }

std::string_view text(TokenId id) {
  const auto& t = table();
  if (id < 0 || id >= static_cast<TokenId>(t.entries.size())) {
    throw ParseError("token id out of vocabulary: " + std::to_string(id));
  }
  return t.entries[static_cast<std::size_t>(id)].text;
}

Category category(TokenId id) {
  const auto& t = table();
  if (id < 0 || id >= static_cast<TokenId>(t.entries.size())) {
    throw ParseError("token id out of vocabulary: " + std::to_string(id));
  }
  return t.entries[static_cast<std::size_t>(id)].category;
}

std::optional<TokenId> find(std::string_view word) {
  const auto& t = table();
  auto it = t.index.find(std::string(word));
  if (it == t.index.end()) return std::nullopt;
  return it->second;
}

TokenId id(std::string_view word) {
  if (auto found = find(word)) return *found;
  throw ParseError("unknown token '" + std::string(word) + "'");
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) out.push_back(id(word));
  return out;
}

std::string detokenize(std::span<const TokenId> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out.append(text(tokens[i]));
  }
  return out;
}

TokenId number(int n) {
  if (n < 1 || n > kMaxNumber) {
    throw ConfigError("number token out of range: " + std::to_string(n));
  }
  return table().first_number + n - 1;
}

int number_value(TokenId id) {
  const auto first = table().first_number;
  if (id >= first && id < first + kMaxNumber) return id - first + 1;
  return -1;
}

TokenId letter(int index) {
  if (index < 0 || index > 3) throw ConfigError("option index out of range");
  return table().first_letter + index;
}

int letter_index(TokenId id) {
  const auto first = table().first_letter;
  if (id >= first && id < first + 4) return id - first;
  return -1;
}

const std::vector<TokenId>& colors() { return table().colors; }
const std::vector<TokenId>& shapes() { return table().shapes; }
const std::vector<TokenId>& positions() { return table().positions; }
const std::vector<TokenId>& relations() { return table().relations; }

Tokens marker(int k) { return {marker_open(), number(k), marker_close()}; }

bool is_marker_piece(TokenId id) {
  const auto c = category(id);
  return c == Category::kMarkerOpen || c == Category::kMarkerClose ||
         c == Category::kNumber;
}

TokenId pad() { return 0; }
TokenId bos() { return 1; }
TokenId eos() { return 2; }
TokenId img_open() { return 3; }
TokenId img_close() { return 4; }
TokenId query() { return 5; }
TokenId answer() { return 6; }
TokenId clause_end() { return 7; }
TokenId qmark() { return 8; }
TokenId time_open() { return 9; }
TokenId time_close() { return 10; }
TokenId dash() { return 11; }
TokenId marker_open() { return 12; }
TokenId marker_close() { return 13; }

}  // namespace vocab

std::vector<std::size_t> find_markers(std::span<const TokenId> tokens) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 2 < tokens.size(); ++i) {
    if (tokens[i] == vocab::marker_open() &&
        vocab::number_value(tokens[i + 1]) > 0 &&
        tokens[i + 2] == vocab::marker_close()) {
      out.push_back(i);
      i += 2;
    }
  }
  return out;
}

Tokens strip_markers(std::span<const TokenId> tokens) {
  Tokens out;
  out.reserve(tokens.size());
  std::size_t i = 0;
  for (std::size_t m : find_markers(tokens)) {
    out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i),
               tokens.begin() + static_cast<std::ptrdiff_t>(m));
    i = m + 3;
  }
  out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.end());
  return out;
}

}  // namespace csteer
