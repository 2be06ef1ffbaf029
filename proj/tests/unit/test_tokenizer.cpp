#include <doctest.h>

#include <random>
#include <string>

#include "tirbench/tokenizer.hpp"

using tirbench::Tokenizer;

TEST_SUITE("tokenizer") {

TEST_CASE("letter and digit runs are capped") {
    CHECK(Tokenizer::count("") == 0);
    CHECK(Tokenizer::count("abcd") == 1);
    CHECK(Tokenizer::count("abcde") == 2);
    CHECK(Tokenizer::count("123") == 1);
    CHECK(Tokenizer::count("1234567") == 3);
    CHECK(Tokenizer::count("3.14") == 3);
    CHECK(Tokenizer::count("[[42]]") == 5);
}

TEST_CASE("whitespace joins the next token, trailing whitespace is one token") {
    CHECK(Tokenizer::count("a b") == 2);
    CHECK(Tokenizer::count("a   b") == 2);
    CHECK(Tokenizer::count("a ") == 2);
    CHECK(Tokenizer::count("   ") == 1);
    const auto ends = Tokenizer::token_ends("ab  cd\n");
    REQUIRE(ends.size() == 3);
    CHECK(ends[0] == 2);
    CHECK(ends[1] == 6);
    CHECK(ends[2] == 7);
}

TEST_CASE("multi-byte characters stay whole") {
    const std::string s = "\xCE\x94x";  // Greek capital delta, then x
    const auto ends = Tokenizer::token_ends(s);
    REQUIRE(ends.size() == 2);
    CHECK(ends[0] == 2);
}

TEST_CASE("truncate keeps whole tokens") {
    CHECK(Tokenizer::truncate("hello world", 1) == "hell");
    CHECK(Tokenizer::truncate("hello world", 0).empty());
    CHECK(Tokenizer::truncate("hi", 10) == "hi");
}

TEST_CASE("truncation is a prefix with the requested count") {
    std::mt19937 rng(7);
    const std::string alphabet = "ab1 .\n[]";
    for (int trial = 0; trial < 500; ++trial) {
        std::string text;
        const int len = static_cast<int>(rng() % 40);
        for (int i = 0; i < len; ++i) text += alphabet[rng() % alphabet.size()];
        const auto total = Tokenizer::count(text);
        const auto k = static_cast<std::int64_t>(rng() % (total + 2));
        const auto cut = Tokenizer::truncate(text, k);
        CHECK(text.starts_with(cut));
        CHECK(Tokenizer::count(cut) == std::min(k, total));
    }
}

}
