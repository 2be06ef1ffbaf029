#include "tirbench/tokenizer.hpp"

#include <algorithm>

namespace tirbench {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

constexpr std::size_t kMaxLetters = 4;
constexpr std::size_t kMaxDigits = 3;

}  // namespace

std::vector<std::size_t> Tokenizer::token_ends(std::string_view text) {
    std::vector<std::size_t> ends;
    ends.reserve(text.size() / 3 + 1);
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        while (i < n && is_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i == n) {
            ends.push_back(n);
            break;
        }
        const auto c = static_cast<unsigned char>(text[i]);
        std::size_t j = i + 1;
        if (is_alpha(c)) {
            while (j < n && j - i < kMaxLetters && is_alpha(static_cast<unsigned char>(text[j]))) ++j;
        } else if (is_digit(c)) {
            while (j < n && j - i < kMaxDigits && is_digit(static_cast<unsigned char>(text[j]))) ++j;
        } else {
            while (j < n && is_continuation(static_cast<unsigned char>(text[j]))) ++j;
        }
        ends.push_back(j);
        i = j;
    }
    return ends;
}

std::int64_t Tokenizer::count(std::string_view text) {
    return static_cast<std::int64_t>(token_ends(text).size());
}

std::string_view Tokenizer::truncate(std::string_view text, std::int64_t max_tokens) {
    if (max_tokens <= 0) return text.substr(0, 0);
    const auto ends = token_ends(text);
    if (static_cast<std::int64_t>(ends.size()) <= max_tokens) return text;
    return text.substr(0, ends[static_cast<std::size_t>(max_tokens) - 1]);
}

}  // namespace tirbench
