#include "tirbench/taskgen.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <map>
#include <memory>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "tirbench/errors.hpp"

namespace tirbench {

namespace {

// mt19937_64 and seed_seq are fully specified by the standard; the bounded
// draws below avoid the implementation-defined distributions.
class Rng {
public:
    Rng(std::uint64_t seed, Category cat, int index) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(cat), static_cast<std::uint32_t>(index)};
        eng_.seed(seq);
    }

    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = eng_.max() - eng_.max() % n;
        std::uint64_t v;
        do {
            v = eng_();
        } while (v >= limit);
        return v % n;
    }

    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool chance(int numerator, int denominator) { return below(static_cast<std::uint64_t>(denominator)) < static_cast<std::uint64_t>(numerator); }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[below(v.size())];
    }

private:
    std::mt19937_64 eng_;
};

void check_spec(const GeneratorSpec& spec) {
    if (spec.count < 0) throw ArgumentError("count must be non-negative");
    if (spec.difficulty < 1 || spec.difficulty > 5) throw ArgumentError("difficulty must lie in 1..5");
}

std::string wrap(std::string_view payload) { return fmt::format("[[{}]]", payload); }

TaskSample make_sample(const GeneratorSpec& spec, int index, std::string instructions, std::string question,
                       std::string_view gold, AnswerKind kind) {
    TaskSample s;
    s.id = fmt::format("{}-{}-{:03}", to_string(spec.category), spec.seed, index);
    s.category = spec.category;
    s.instructions = std::move(instructions);
    s.question = std::move(question);
    s.gold_answer = wrap(gold);
    s.answer_kind = kind;
    return s;
}

std::uint64_t pow10(int e) {
    std::uint64_t v = 1;
    while (e-- > 0) v *= 10;
    return v;
}

const std::vector<int> kBases{2, 3, 4, 5, 6, 7, 8, 9, 11, 12, 13, 14, 15, 16};

// ---- boolean logic ------------------------------------------------------

struct BoolExpr {
    enum class Op { var, not_, and_, or_, xor_ } op = Op::var;
    int var = 0;
    std::unique_ptr<BoolExpr> lhs, rhs;
};

std::unique_ptr<BoolExpr> random_expr(Rng& rng, int vars, int depth, bool allow_xor) {
    auto e = std::make_unique<BoolExpr>();
    if (depth == 0 || rng.chance(1, 4)) {
        e->var = static_cast<int>(rng.below(static_cast<std::uint64_t>(vars)));
        return e;
    }
    const auto roll = rng.below(allow_xor ? 7 : 6);
    if (roll < 1) {
        e->op = BoolExpr::Op::not_;
        e->lhs = random_expr(rng, vars, depth - 1, allow_xor);
        return e;
    }
    e->op = roll < 3 ? BoolExpr::Op::and_ : roll < 6 ? BoolExpr::Op::or_ : BoolExpr::Op::xor_;
    e->lhs = random_expr(rng, vars, depth - 1, allow_xor);
    e->rhs = random_expr(rng, vars, depth - 1, allow_xor);
    return e;
}

std::string render(const BoolExpr& e) {
    switch (e.op) {
        case BoolExpr::Op::var: return std::string(1, static_cast<char>('A' + e.var));
        case BoolExpr::Op::not_: return "NOT " + render(*e.lhs);
        case BoolExpr::Op::and_: return "(" + render(*e.lhs) + " AND " + render(*e.rhs) + ")";
        case BoolExpr::Op::or_: return "(" + render(*e.lhs) + " OR " + render(*e.rhs) + ")";
        case BoolExpr::Op::xor_: return "(" + render(*e.lhs) + " XOR " + render(*e.rhs) + ")";
    }
    return {};
}

bool eval(const BoolExpr& e, unsigned assignment) {
    switch (e.op) {
        case BoolExpr::Op::var: return (assignment >> e.var) & 1u;
        case BoolExpr::Op::not_: return !eval(*e.lhs, assignment);
        case BoolExpr::Op::and_: return eval(*e.lhs, assignment) && eval(*e.rhs, assignment);
        case BoolExpr::Op::or_: return eval(*e.lhs, assignment) || eval(*e.rhs, assignment);
        case BoolExpr::Op::xor_: return eval(*e.lhs, assignment) != eval(*e.rhs, assignment);
    }
    return false;
}

std::string truth(bool v) { return v ? "True" : "False"; }

// Evaluates printed expressions straight from the text.
class ExprParser {
public:
    ExprParser(std::string_view text, const std::map<char, bool>& values) : text_(text), values_(values) {}

    bool parse_all() {
        const bool v = expr();
        skip();
        if (pos_ != text_.size()) throw ArgumentError("trailing text in expression");
        return v;
    }

private:
    void skip() {
        while (pos_ < text_.size() && text_[pos_] == ' ') ++pos_;
    }
    bool eat(std::string_view word) {
        skip();
        if (text_.substr(pos_).starts_with(word)) {
            pos_ += word.size();
            return true;
        }
        return false;
    }
    bool expr() {
        if (eat("NOT ")) return !expr();
        if (eat("(")) {
            const bool a = expr();
            bool v;
            if (eat("AND ")) {
                v = expr() && a;
            } else if (eat("OR ")) {
                v = expr() || a;
            } else if (eat("XOR ")) {
                v = expr() != a;
            } else {
                throw ArgumentError("expected an operator");
            }
            if (!eat(")")) throw ArgumentError("expected ')'");
            return v;
        }
        skip();
        if (pos_ >= text_.size()) throw ArgumentError("unexpected end of expression");
        const auto it = values_.find(text_[pos_]);
        if (it == values_.end()) throw ArgumentError("unknown variable");
        ++pos_;
        return it->second;
    }

    std::string_view text_;
    const std::map<char, bool>& values_;
    std::size_t pos_ = 0;
};

// ---- formal language ----------------------------------------------------

bool is_nonterminal(char c) { return c >= 'A' && c <= 'Z'; }

class Recognizer {
public:
    Recognizer(const Grammar& g, std::string_view word) : g_(g), word_(word) {
        const auto n = word.size() + 1;
        memo_.assign(g.rules.size() * n * n, -1);
    }

    bool accepts() { return !g_.rules.empty() && symbol(g_.rules.front().head, 0, word_.size()); }

private:
    const Grammar::Rule* rule(char head) const {
        for (const auto& r : g_.rules) {
            if (r.head == head) return &r;
        }
        return nullptr;
    }

    std::size_t rule_index(char head) const {
        for (std::size_t i = 0; i < g_.rules.size(); ++i) {
            if (g_.rules[i].head == head) return i;
        }
        return g_.rules.size();
    }

    bool symbol(char s, std::size_t i, std::size_t j) {
        if (!is_nonterminal(s)) return j == i + 1 && word_[i] == s;
        const auto r = rule_index(s);
        if (r == g_.rules.size()) return false;
        const auto n = word_.size() + 1;
        auto& slot = memo_[(r * n + i) * n + j];
        if (slot >= 0) return slot == 1;
        bool ok = false;
        for (const auto& alt : g_.rules[r].alternatives) {
            if (sequence(alt, 0, i, j)) {
                ok = true;
                break;
            }
        }
        slot = ok ? 1 : 0;
        return ok;
    }

    bool sequence(const std::string& alt, std::size_t k, std::size_t i, std::size_t j) {
        const std::size_t left = alt.size() - k;
        if (j - i < left) return false;
        if (left == 1) return symbol(alt[k], i, j);
        for (std::size_t m = i + 1; m + (left - 1) <= j; ++m) {
            if (symbol(alt[k], i, m) && sequence(alt, k + 1, m, j)) return true;
        }
        return false;
    }

    const Grammar& g_;
    std::string_view word_;
    std::vector<signed char> memo_;
};

Grammar random_grammar(Rng& rng, int difficulty) {
    const std::string heads = difficulty >= 4 ? "SAB" : difficulty >= 2 ? "SA" : "S";
    const std::string terms = difficulty >= 2 ? "abc" : "ab";
    const std::string symbols = heads + terms;
    const int alts = difficulty >= 4 ? 3 : 2;
    Grammar g;
    for (char h : heads) {
        Grammar::Rule r{h, {}};
        // A terminal-only alternative keeps every derivation finite.
        std::string base;
        const auto base_len = rng.range(1, 2);
        for (int k = 0; k < base_len; ++k) base += terms[rng.below(terms.size())];
        r.alternatives.push_back(base);
        int guard = 0;
        while (static_cast<int>(r.alternatives.size()) < alts && guard++ < 50) {
            std::string alt;
            const auto len = rng.range(2, 3);
            for (int k = 0; k < len; ++k) alt += symbols[rng.below(symbols.size())];
            if (std::none_of(alt.begin(), alt.end(), is_nonterminal)) continue;
            if (std::find(r.alternatives.begin(), r.alternatives.end(), alt) != r.alternatives.end()) continue;
            r.alternatives.push_back(alt);
        }
        g.rules.push_back(std::move(r));
    }
    return g;
}

bool derive(Rng& rng, const Grammar& g, char sym, int depth, int max_depth, std::string& out, std::size_t max_len) {
    if (out.size() > max_len) return false;
    if (!is_nonterminal(sym)) {
        out += sym;
        return true;
    }
    const Grammar::Rule* rule = nullptr;
    for (const auto& r : g.rules) {
        if (r.head == sym) rule = &r;
    }
    if (!rule) return false;
    std::vector<std::string> options;
    for (const auto& alt : rule->alternatives) {
        if (depth < max_depth || std::none_of(alt.begin(), alt.end(), is_nonterminal)) options.push_back(alt);
    }
    const auto& alt = rng.pick(options);
    for (char c : alt) {
        if (!derive(rng, g, c, depth + 1, max_depth, out, max_len)) return false;
    }
    return true;
}

std::string spaced(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ' ';
        out += s[i];
    }
    return out;
}

// ---- question patterns shared by generators and checkers ------------------

const std::regex kToBase(R"(Convert the decimal number (\d+) to base (\d+)\.)");
const std::regex kFromBase(R"(Convert the base-(\d+) number ([0-9A-Z]+) to decimal\.)");
const std::regex kModPow(R"(Compute (\d+)\^(\d+) mod (\d+)\.)");
const std::regex kBoolEval(R"(Variables: ([A-F] = (?:True|False)(?:, [A-F] = (?:True|False))*)\.\nExpression: ([^\n]+)\nWhat is the value)");
const std::regex kBoolCount(R"(Variables: ([A-F](?:, [A-F])*)\.\nExpression: ([^\n]+)\nHow many)");
const std::regex kGrammar(R"(Grammar \(start symbol S\):\n([\s\S]*?)\nA string derived from S has one terminal hidden as _:\n([^\n]+)\n)");
const std::regex kRepetition(R"(The received copies are: ([01 ]+)\.)");
const std::regex kParity(R"(Received words: ([01 ]+)\.)");

}  // namespace

std::string to_base(std::uint64_t value, int base) {
    if (base < 2 || base > 36) throw ArgumentError("base must lie in 2..36");
    if (value == 0) return "0";
    std::string digits;
    while (value > 0) {
        const auto d = static_cast<int>(value % static_cast<std::uint64_t>(base));
        digits += static_cast<char>(d < 10 ? '0' + d : 'A' + d - 10);
        value /= static_cast<std::uint64_t>(base);
    }
    std::reverse(digits.begin(), digits.end());
    return digits;
}

std::uint64_t mod_pow(std::uint64_t base, std::uint64_t exponent, std::uint64_t modulus) {
    if (modulus == 0) throw ArgumentError("modulus must be positive");
    if (modulus == 1) return 0;
    unsigned __int128 result = 1;
    unsigned __int128 b = base % modulus;
    while (exponent > 0) {
        if (exponent & 1u) result = result * b % modulus;
        b = b * b % modulus;
        exponent >>= 1;
    }
    return static_cast<std::uint64_t>(result);
}

std::string Grammar::render() const {
    std::string out;
    for (const auto& r : rules) {
        out += fmt::format("{} ->", r.head);
        for (std::size_t i = 0; i < r.alternatives.size(); ++i) {
            out += i ? " | " : " ";
            out += spaced(r.alternatives[i]);
        }
        out += '\n';
    }
    return out;
}

Grammar Grammar::parse(std::string_view text) {
    Grammar g;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto arrow = line.find("->");
        if (arrow == std::string::npos) throw ArgumentError("grammar line lacks '->': " + line);
        const auto head = line.substr(0, arrow);
        const auto hb = head.find_first_not_of(' ');
        if (hb == std::string::npos || !is_nonterminal(head[hb])) throw ArgumentError("bad rule head: " + line);
        Rule r{head[hb], {}};
        std::string alt;
        for (char c : line.substr(arrow + 2) + "|") {
            if (c == '|') {
                if (alt.empty()) throw ArgumentError("empty alternative: " + line);
                r.alternatives.push_back(alt);
                alt.clear();
            } else if (c != ' ' && c != '\t' && c != '\r') {
                alt += c;
            }
        }
        g.rules.push_back(std::move(r));
    }
    return g;
}

bool derives(const Grammar& g, std::string_view word) {
    if (word.empty()) return false;
    return Recognizer(g, word).accepts();
}

const std::vector<Category>& generated_categories() {
    static const std::vector<Category> cats{Category::number_calculation, Category::boolean_logic,
                                            Category::formal_language, Category::communication_code};
    return cats;
}

std::vector<TaskSample> gen_number_calculation(const GeneratorSpec& spec) {
    check_spec(spec);
    const std::string digits_note =
        "Digits above 9 are written as upper-case letters: A = 10, B = 11, and so on. "
        "Write numbers without prefixes or subscripts.";
    std::vector<TaskSample> out;
    for (int i = 0; i < spec.count; ++i) {
        Rng rng(spec.seed, spec.category, i);
        const int d = spec.difficulty;
        switch (rng.below(3)) {
            case 0: {
                const auto n = rng.below(pow10(d + 2));
                const int b = rng.pick(kBases);
                out.push_back(make_sample(spec, i, digits_note,
                                          fmt::format("Convert the decimal number {} to base {}.", n, b), to_base(n, b),
                                          AnswerKind::string));
                break;
            }
            case 1: {
                const auto n = rng.below(pow10(d + 2));
                const int b = rng.pick(kBases);
                out.push_back(make_sample(spec, i, digits_note,
                                          fmt::format("Convert the base-{} number {} to decimal.", b, to_base(n, b)),
                                          std::to_string(n), AnswerKind::numeric));
                break;
            }
            default: {
                const auto a = static_cast<std::uint64_t>(rng.range(2, static_cast<std::int64_t>(pow10(d + 1))));
                const auto e = static_cast<std::uint64_t>(rng.range(2, 10 + 20 * d));
                const auto m = static_cast<std::uint64_t>(rng.range(2, static_cast<std::int64_t>(pow10(d + 1)) + 7));
                out.push_back(make_sample(spec, i,
                                          "Give the remainder as a non-negative integer smaller than the modulus.",
                                          fmt::format("Compute {}^{} mod {}.", a, e, m),
                                          std::to_string(mod_pow(a, e, m)), AnswerKind::numeric));
                break;
            }
        }
    }
    return out;
}

std::vector<TaskSample> gen_boolean_logic(const GeneratorSpec& spec) {
    check_spec(spec);
    const std::string instructions =
        "Operators: NOT binds to the operand that follows it; AND, OR and XOR appear inside parentheses. "
        "Answer truth values with True or False.";
    std::vector<TaskSample> out;
    for (int i = 0; i < spec.count; ++i) {
        Rng rng(spec.seed, spec.category, i);
        const int vars = std::min(6, 2 + spec.difficulty);
        const auto expr = random_expr(rng, vars, 1 + spec.difficulty, spec.difficulty >= 3);
        const auto text = render(*expr);
        if (rng.chance(1, 2)) {
            const auto assignment = static_cast<unsigned>(rng.below(1u << vars));
            std::string listing;
            for (int v = 0; v < vars; ++v) {
                listing += fmt::format("{}{} = {}", v ? ", " : "", static_cast<char>('A' + v),
                                       truth((assignment >> v) & 1u));
            }
            out.push_back(make_sample(
                spec, i, instructions,
                fmt::format("Variables: {}.\nExpression: {}\nWhat is the value of the expression?", listing, text),
                truth(eval(*expr, assignment)), AnswerKind::string));
        } else {
            std::string names;
            for (int v = 0; v < vars; ++v) names += fmt::format("{}{}", v ? ", " : "", static_cast<char>('A' + v));
            int count = 0;
            for (unsigned a = 0; a < (1u << vars); ++a) count += eval(*expr, a) ? 1 : 0;
            out.push_back(make_sample(
                spec, i, instructions,
                fmt::format("Variables: {}.\nExpression: {}\nHow many of the {} assignments of True/False to the "
                            "variables make the expression true?",
                            names, text, 1u << vars),
                std::to_string(count), AnswerKind::numeric));
        }
    }
    return out;
}

std::vector<TaskSample> gen_formal_language(const GeneratorSpec& spec) {
    check_spec(spec);
    const std::string instructions =
        "Upper-case letters are nonterminals and lower-case letters are terminals. Alternatives are separated "
        "by |. Symbols are separated by spaces. Answer with the single hidden terminal.";
    std::vector<TaskSample> out;
    for (int i = 0; i < spec.count; ++i) {
        Rng rng(spec.seed, spec.category, i);
        const std::size_t max_len = static_cast<std::size_t>(6 + 2 * spec.difficulty);
        // Regenerate until the hidden position admits exactly one terminal.
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000) throw ArgumentError("could not generate an unambiguous grammar item");
            const auto g = random_grammar(rng, spec.difficulty);
            std::string word;
            if (!derive(rng, g, 'S', 0, 2 + spec.difficulty, word, max_len)) continue;
            if (word.size() < 3 || word.size() > max_len) continue;
            const auto pos = rng.below(word.size());
            std::set<char> terminals;
            for (const auto& r : g.rules) {
                for (const auto& alt : r.alternatives) {
                    for (char c : alt) {
                        if (!is_nonterminal(c)) terminals.insert(c);
                    }
                }
            }
            int fits = 0;
            for (char t : terminals) {
                auto probe = word;
                probe[pos] = t;
                fits += derives(g, probe) ? 1 : 0;
            }
            if (fits != 1) continue;
            auto masked = word;
            masked[pos] = '_';
            out.push_back(make_sample(
                spec, i, instructions,
                fmt::format("Grammar (start symbol S):\n{}\nA string derived from S has one terminal hidden as _:\n{}\n"
                            "Which terminal is hidden?",
                            g.render(), spaced(masked)),
                std::string(1, word[pos]), AnswerKind::string));
            break;
        }
    }
    return out;
}

std::vector<TaskSample> gen_communication_code(const GeneratorSpec& spec) {
    check_spec(spec);
    std::vector<TaskSample> out;
    for (int i = 0; i < spec.count; ++i) {
        Rng rng(spec.seed, spec.category, i);
        if (rng.chance(1, 2)) {
            const int k = 2 + spec.difficulty;
            std::string message;
            for (int b = 0; b < k; ++b) message += rng.chance(1, 2) ? '1' : '0';
            std::vector<std::string> copies(3, message);
            if (rng.chance(1, 2)) {
                auto& c = copies[rng.below(3)];
                auto& bit = c[rng.below(static_cast<std::uint64_t>(k))];
                bit = bit == '1' ? '0' : '1';
            }
            out.push_back(make_sample(
                spec, i, "Decode each bit position by majority vote across the copies. Answer with the bit string.",
                fmt::format("A {}-bit message was sent three times with a repetition code. The received copies are: "
                            "{} {} {}. At most one bit was flipped in transit. What was the message?",
                            k, copies[0], copies[1], copies[2]),
                message, AnswerKind::string));
        } else {
            const int words = 3 + spec.difficulty;
            std::vector<std::string> list;
            for (int w = 0; w < words; ++w) {
                std::string word;
                int ones = 0;
                for (int b = 0; b < 7; ++b) {
                    const bool one = rng.chance(1, 2);
                    word += one ? '1' : '0';
                    ones += one;
                }
                word += ones % 2 ? '1' : '0';
                list.push_back(word);
            }
            int corrupted = 0;
            if (rng.chance(1, 2)) {
                corrupted = static_cast<int>(rng.below(static_cast<std::uint64_t>(words))) + 1;
                auto& bit = list[static_cast<std::size_t>(corrupted - 1)][rng.below(8)];
                bit = bit == '1' ? '0' : '1';
            }
            std::string joined;
            for (std::size_t w = 0; w < list.size(); ++w) joined += (w ? " " : "") + list[w];
            out.push_back(make_sample(
                spec, i, "A word passes the check when it holds an even number of 1 bits.",
                fmt::format("Each 8-bit word below ends with an even-parity bit. Received words: {}. At most one word "
                            "was corrupted. Give the 1-based position of the corrupted word, or 0 if every word "
                            "passes.",
                            joined),
                std::to_string(corrupted), AnswerKind::numeric));
        }
    }
    return out;
}

std::vector<TaskSample> generate(const GeneratorSpec& spec) {
    switch (spec.category) {
        case Category::number_calculation: return gen_number_calculation(spec);
        case Category::boolean_logic: return gen_boolean_logic(spec);
        case Category::formal_language: return gen_formal_language(spec);
        case Category::communication_code: return gen_communication_code(spec);
        default: break;
    }
    throw ArgumentError(fmt::format("no generator for category {}", to_string(spec.category)));
}

std::optional<std::string> check_generated(const TaskSample& sample) {
    std::smatch m;
    const std::string& q = sample.question;
    switch (sample.category) {
        case Category::number_calculation: {
            if (std::regex_search(q, m, kToBase)) {
                const auto n = std::stoull(m[1]);
                const int base = std::stoi(m[2]);
                char buf[80];
                const auto res = std::to_chars(buf, buf + sizeof buf, n, base);
                std::string s(buf, res.ptr);
                for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
                return s;
            }
            if (std::regex_search(q, m, kFromBase)) {
                const int base = std::stoi(m[1]);
                const std::string digits = m[2];
                std::uint64_t v = 0;
                const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), v, base);
                if (res.ec != std::errc{} || res.ptr != digits.data() + digits.size()) return std::nullopt;
                return std::to_string(v);
            }
            if (std::regex_search(q, m, kModPow)) {
                const auto a = std::stoull(m[1]);
                const auto e = std::stoull(m[2]);
                const auto mod = std::stoull(m[3]);
                std::uint64_t r = 1 % mod;
                for (std::uint64_t k = 0; k < e; ++k) r = static_cast<std::uint64_t>(
                    static_cast<unsigned __int128>(r) * (a % mod) % mod);
                return std::to_string(r);
            }
            return std::nullopt;
        }
        case Category::boolean_logic: {
            if (std::regex_search(q, m, kBoolEval)) {
                std::map<char, bool> values;
                const std::string listing = m[1];
                const std::regex item(R"(([A-F]) = (True|False))");
                for (auto it = std::sregex_iterator(listing.begin(), listing.end(), item); it != std::sregex_iterator();
                     ++it) {
                    values[(*it)[1].str()[0]] = (*it)[2] == "True";
                }
                return ExprParser(m[2].str(), values).parse_all() ? "True" : "False";
            }
            if (std::regex_search(q, m, kBoolCount)) {
                std::vector<char> names;
                for (char c : m[1].str()) {
                    if (c >= 'A' && c <= 'F') names.push_back(c);
                }
                const std::string expr = m[2];
                int count = 0;
                for (unsigned a = 0; a < (1u << names.size()); ++a) {
                    std::map<char, bool> values;
                    for (std::size_t k = 0; k < names.size(); ++k) values[names[k]] = (a >> k) & 1u;
                    count += ExprParser(expr, values).parse_all() ? 1 : 0;
                }
                return std::to_string(count);
            }
            return std::nullopt;
        }
        case Category::formal_language: {
            if (!std::regex_search(q, m, kGrammar)) return std::nullopt;
            const auto g = Grammar::parse(m[1].str());
            std::string word;
            for (char c : m[2].str()) {
                if (c != ' ') word += c;
            }
            const auto gap = word.find('_');
            if (gap == std::string::npos) return std::nullopt;
            std::set<char> terminals;
            for (const auto& r : g.rules) {
                for (const auto& alt : r.alternatives) {
                    for (char c : alt) {
                        if (!is_nonterminal(c)) terminals.insert(c);
                    }
                }
            }
            std::vector<char> fits;
            for (char t : terminals) {
                word[gap] = t;
                if (derives(g, word)) fits.push_back(t);
            }
            if (fits.size() != 1) return std::nullopt;
            return std::string(1, fits.front());
        }
        case Category::communication_code: {
            if (std::regex_search(q, m, kRepetition)) {
                std::istringstream in(m[1].str());
                std::vector<std::string> copies;
                for (std::string c; in >> c;) copies.push_back(c);
                if (copies.empty()) return std::nullopt;
                std::string decoded;
                for (std::size_t b = 0; b < copies.front().size(); ++b) {
                    std::size_t ones = 0;
                    for (const auto& c : copies) ones += c.at(b) == '1';
                    decoded += 2 * ones > copies.size() ? '1' : '0';
                }
                return decoded;
            }
            if (std::regex_search(q, m, kParity)) {
                std::istringstream in(m[1].str());
                int pos = 0;
                int bad = 0;
                for (std::string w; in >> w;) {
                    ++pos;
                    if (std::popcount(std::stoul(w, nullptr, 2)) % 2 != 0) bad = pos;
                }
                return std::to_string(bad);
            }
            return std::nullopt;
        }
        default: return std::nullopt;
    }
}

}  // namespace tirbench
