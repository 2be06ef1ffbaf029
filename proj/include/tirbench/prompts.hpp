#pragma once

#include <string>
#include <string_view>

#include "tirbench/records.hpp"

namespace tirbench {

enum class TemplateId { vanilla, pot, tir };

std::string_view to_string(TemplateId v);
TemplateId parse_template_id(std::string_view s);

/// Template matching a paradigm: MT-TIR and TIT share the tool template.
TemplateId default_template(Paradigm p);

/// Raw template text, with two `{}` slots: instructions, then question.
std::string_view template_text(TemplateId id);

/// Fills the slots positionally; braces inside the inserted text are left alone.
std::string render_prompt(TemplateId id, std::string_view instructions, std::string_view question);

}  // namespace tirbench
