#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tirbench {

/// Deterministic fallback tokenizer, used whenever an endpoint does not report
/// usage and for locating answer candidates inside generated text.
///
/// A token is one of: a run of up to 4 ASCII letters, a run of up to 3 digits,
/// or a single other non-space byte (UTF-8 continuation bytes stay with their
/// lead byte). Whitespace is absorbed into the token that follows it; trailing
/// whitespace at the end of the text forms one final token.
class Tokenizer {
public:
    /// Byte offset one past the end of every token, in order.
    static std::vector<std::size_t> token_ends(std::string_view text);

    static std::int64_t count(std::string_view text);

    /// Longest prefix of `text` holding at most `max_tokens` tokens.
    static std::string_view truncate(std::string_view text, std::int64_t max_tokens);
};

}  // namespace tirbench
