#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tirbench/records.hpp"

namespace tirbench {

struct GeneratorSpec {
    Category category = Category::number_calculation;
    std::uint64_t seed = 0;
    int count = 10;
    /// 1 (easiest) to 5.
    int difficulty = 1;
};

/// Categories with a procedural generator.
const std::vector<Category>& generated_categories();

/// Throws ArgumentError for categories without a generator or a bad spec.
std::vector<TaskSample> generate(const GeneratorSpec& spec);

std::vector<TaskSample> gen_number_calculation(const GeneratorSpec& spec);
std::vector<TaskSample> gen_boolean_logic(const GeneratorSpec& spec);
std::vector<TaskSample> gen_formal_language(const GeneratorSpec& spec);
std::vector<TaskSample> gen_communication_code(const GeneratorSpec& spec);

/// Recomputes a generated sample's gold answer from its question text alone,
/// without the generator's internal state. The payload comes back without
/// the `[[ ]]` wrapper; nullopt when the question is not recognized.
std::optional<std::string> check_generated(const TaskSample& sample);

// Building blocks, exposed for tests.
std::string to_base(std::uint64_t value, int base);
std::uint64_t mod_pow(std::uint64_t base, std::uint64_t exponent, std::uint64_t modulus);

/// Context-free grammar without empty or unit productions. Upper-case letters
/// are nonterminals, everything else a terminal; the first rule's head is the
/// start symbol.
struct Grammar {
    struct Rule {
        char head;
        std::vector<std::string> alternatives;  // each alternative: one char per symbol
    };
    std::vector<Rule> rules;

    /// "S -> aSb | ab" style, one rule per line, symbols space-separated.
    std::string render() const;
    static Grammar parse(std::string_view text);
};

/// Whether the grammar derives exactly `word` from its start symbol.
bool derives(const Grammar& g, std::string_view word);

}  // namespace tirbench
