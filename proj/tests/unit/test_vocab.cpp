#include "doctest.h"

#include "csteer/error.hpp"
#include "csteer/vocab.hpp"

using namespace csteer;

TEST_CASE("vocabulary round-trips every token") {
  for (TokenId t = 0; t < vocab::size(); ++t) {
    CHECK(vocab::id(vocab::text(t)) == t);
  }
  CHECK_THROWS_AS(vocab::id("zebra"), ParseError);
  CHECK_FALSE(vocab::find("zebra").has_value());
}

TEST_CASE("tokenize and detokenize are inverse on canonical text") {
  const std::string text = "<bos> <img> [ 1 ] red cube left ; </img> Q: color [ 1 ] ? Ans:";
  CHECK(vocab::detokenize(vocab::tokenize(text)) == text);
  CHECK(vocab::tokenize("  red\tcube \n").size() == 2);
}

TEST_CASE("markers render as three pieces and are located by their bracket") {
  const Tokens m = vocab::marker(2);
  REQUIRE(m.size() == 3);
  CHECK(m[0] == vocab::marker_open());
  CHECK(vocab::number_value(m[1]) == 2);
  CHECK(m[2] == vocab::marker_close());

  const Tokens seq = vocab::tokenize("red [ 1 ] cube [ 12 ] ] [ blue");
  CHECK(find_markers(seq) == std::vector<std::size_t>{1, 5});
  CHECK(strip_markers(seq) == vocab::tokenize("red cube ] [ blue"));
}

TEST_CASE("number and letter helpers") {
  CHECK(vocab::number_value(vocab::number(16)) == 16);
  CHECK(vocab::number_value(vocab::id("red")) == -1);
  CHECK(vocab::letter_index(vocab::letter(3)) == 3);
  CHECK(vocab::text(vocab::letter(0)) == "A");
}
