#include "tirbench/prompts.hpp"

#include "tirbench/errors.hpp"

namespace tirbench {

namespace detail {
extern const std::string_view kVanillaTemplate;
extern const std::string_view kPotTemplate;
extern const std::string_view kTirTemplate;
}  // namespace detail

std::string_view to_string(TemplateId v) {
    switch (v) {
        case TemplateId::vanilla: return "vanilla";
        case TemplateId::pot: return "pot";
        case TemplateId::tir: return "tir";
    }
    return "?";
}

TemplateId parse_template_id(std::string_view s) {
    if (s == "vanilla") return TemplateId::vanilla;
    if (s == "pot") return TemplateId::pot;
    if (s == "tir") return TemplateId::tir;
    throw ArgumentError("unknown prompt template '" + std::string(s) + "'");
}

TemplateId default_template(Paradigm p) {
    switch (p) {
        case Paradigm::vanilla: return TemplateId::vanilla;
        case Paradigm::pot: return TemplateId::pot;
        case Paradigm::mt_tir:
        case Paradigm::tit: return TemplateId::tir;
    }
    return TemplateId::vanilla;
}

std::string_view template_text(TemplateId id) {
    switch (id) {
        case TemplateId::vanilla: return detail::kVanillaTemplate;
        case TemplateId::pot: return detail::kPotTemplate;
        case TemplateId::tir: return detail::kTirTemplate;
    }
    return {};
}

std::string render_prompt(TemplateId id, std::string_view instructions, std::string_view question) {
    const auto text = template_text(id);
    const auto first = text.find("{}");
    const auto second = first == std::string_view::npos ? first : text.find("{}", first + 2);
    if (second == std::string_view::npos) throw ArgumentError("template lacks two {} slots");
    std::string out;
    out.reserve(text.size() + instructions.size() + question.size());
    out.append(text.substr(0, first));
    out.append(instructions);
    out.append(text.substr(first + 2, second - first - 2));
    out.append(question);
    out.append(text.substr(second + 2));
    return out;
}

}  // namespace tirbench
