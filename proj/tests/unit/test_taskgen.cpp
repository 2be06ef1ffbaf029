#include <doctest.h>

#include <cctype>
#include <random>
#include <set>

#include "tirbench/errors.hpp"
#include "tirbench/taskgen.hpp"
#include "tirbench/verify.hpp"

using namespace tirbench;

namespace {

// Leftmost derivations; forms never shrink since there are no empty or unit rules.
bool derives_by_search(const Grammar& g, const std::string& word) {
    std::set<std::string> seen;
    std::vector<std::string> stack{std::string(1, g.rules.front().head)};
    while (!stack.empty()) {
        auto form = stack.back();
        stack.pop_back();
        if (form.size() > word.size() || !seen.insert(form).second) continue;
        const auto nt = std::find_if(form.begin(), form.end(), [](char c) { return std::isupper(static_cast<unsigned char>(c)); });
        if (nt == form.end()) {
            if (form == word) return true;
            continue;
        }
        const auto prefix = static_cast<std::size_t>(nt - form.begin());
        if (form.compare(0, prefix, word, 0, prefix) != 0) continue;
        for (const auto& r : g.rules) {
            if (r.head != *nt) continue;
            for (const auto& alt : r.alternatives) stack.push_back(form.substr(0, prefix) + alt + form.substr(prefix + 1));
        }
    }
    return false;
}

std::string base_digits(std::uint64_t v, int base) {
    const char* digits = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    std::string s;
    do {
        s.insert(s.begin(), digits[v % static_cast<std::uint64_t>(base)]);
        v /= static_cast<std::uint64_t>(base);
    } while (v);
    return s;
}

}  // namespace

TEST_SUITE("taskgen") {

TEST_CASE("building blocks") {
    CHECK(to_base(255, 16) == "FF");
    CHECK(to_base(0, 7) == "0");
    CHECK(to_base(5, 2) == "101");
    CHECK_THROWS_AS(to_base(5, 1), ArgumentError);
    CHECK(mod_pow(3, 200, 50) == 1);
    CHECK(mod_pow(7, 0, 13) == 1);
    CHECK(mod_pow(7, 5, 1) == 0);
    CHECK_THROWS_AS(mod_pow(2, 2, 0), ArgumentError);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 1000; ++i) {
        const auto v = rng() >> (rng() % 64);
        const int b = 2 + static_cast<int>(rng() % 35);
        CHECK(to_base(v, b) == base_digits(v, b));
        const auto a = rng() % 1000, e = rng() % 60, m = 1 + rng() % 1000;
        std::uint64_t naive = 1 % m;
        for (std::uint64_t k = 0; k < e; ++k) naive = naive * a % m;
        CHECK(mod_pow(a, e, m) == naive);
    }
}

TEST_CASE("grammars parse, render and recognize") {
    const auto g = Grammar::parse("S -> a S b | a b\n");
    CHECK(g.rules.size() == 1);
    CHECK(g.render() == "S -> a S b | a b\n");
    CHECK(derives(g, "ab"));
    CHECK(derives(g, "aaabbb"));
    CHECK_FALSE(derives(g, "aab"));
    CHECK_FALSE(derives(g, ""));
    CHECK_THROWS_AS(Grammar::parse("S a b"), ArgumentError);
    CHECK_THROWS_AS(Grammar::parse("S -> a | | b"), ArgumentError);

    const auto h = Grammar::parse("S -> A B | b\nA -> a A | a\nB -> b\n");
    for (const std::string w : {"ab", "aab", "b", "ba", "abb", "aaaab"}) CHECK(derives(h, w) == derives_by_search(h, w));
}

TEST_CASE("worked examples check out") {
    TaskSample hex;
    hex.category = Category::number_calculation;
    hex.question = "Convert the decimal number 255 to base 16.";
    CHECK(check_generated(hex) == "FF");
    hex.question = "Convert the decimal number 0 to base 3.";
    CHECK(check_generated(hex) == "0");

    TaskSample rep;
    rep.category = Category::communication_code;
    rep.question = "A 3-bit message was sent three times with a repetition code. The received copies are: "
                   "110 110 010. At most one bit was flipped in transit. What was the message?";
    CHECK(check_generated(rep) == "110");

    TaskSample cfg;
    cfg.category = Category::formal_language;
    cfg.question = "Grammar (start symbol S):\nS -> a S b | a b\n\nA string derived from S has one terminal hidden as "
                   "_:\na a _ b\nWhich terminal is hidden?";
    CHECK(check_generated(cfg) == "b");

    TaskSample odd;
    odd.category = Category::puzzle;
    odd.question = "anything";
    CHECK_FALSE(check_generated(odd));
}

TEST_CASE("generated gold answers agree with the checker") {
    for (const auto cat : generated_categories()) {
        for (int difficulty = 1; difficulty <= 5; ++difficulty) {
            for (std::uint64_t seed = 0; seed < 8; ++seed) {
                const auto samples = generate(GeneratorSpec{cat, seed, 12, difficulty});
                REQUIRE(samples.size() == 12);
                for (const auto& s : samples) {
                    const auto expected = check_generated(s);
                    REQUIRE_MESSAGE(expected, s.question);
                    CHECK_MESSAGE(gold_payload(s.gold_answer) == *expected, s.question);
                    CHECK(check_answer(*expected, s.gold_answer, s.answer_kind));
                    CHECK(task_from_json(to_json(s)) == s);
                }
            }
        }
    }
}

TEST_CASE("hidden terminals are unique under an independent search") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        for (const auto& s : generate(GeneratorSpec{Category::formal_language, seed, 10, 2})) {
            const auto start = s.question.find(":\n") + 2;
            const auto end = s.question.find("\nA string derived");
            const auto g = Grammar::parse(s.question.substr(start, end - start));
            const auto masked_at = s.question.find("_:\n") + 3;
            std::string word;
            for (char c : s.question.substr(masked_at, s.question.find('\n', masked_at) - masked_at)) {
                if (c != ' ') word += c;
            }
            int fits = 0;
            std::string fit;
            for (char t = 'a'; t <= 'z'; ++t) {
                auto probe = word;
                probe[probe.find('_')] = t;
                if (derives_by_search(g, probe)) {
                    ++fits;
                    fit = std::string(1, t);
                }
            }
            CHECK(fits == 1);
            CHECK(fit == gold_payload(s.gold_answer));
        }
    }
}

TEST_CASE("generation is deterministic and seed dependent") {
    const GeneratorSpec spec{Category::boolean_logic, 42, 20, 3};
    const auto a = generate(spec);
    const auto b = generate(spec);
    CHECK(a == b);
    auto other = spec;
    other.seed = 43;
    CHECK(generate(other) != a);
    std::set<std::string> ids;
    for (const auto& s : a) ids.insert(s.id);
    CHECK(ids.size() == a.size());
}

TEST_CASE("bad specs are refused") {
    CHECK_THROWS_AS(generate(GeneratorSpec{Category::puzzle, 1, 5, 1}), ArgumentError);
    CHECK_THROWS_AS(generate(GeneratorSpec{Category::boolean_logic, 1, 5, 0}), ArgumentError);
    CHECK_THROWS_AS(generate(GeneratorSpec{Category::boolean_logic, 1, -1, 1}), ArgumentError);
    CHECK(generate(GeneratorSpec{Category::boolean_logic, 1, 0, 1}).empty());
}

}
