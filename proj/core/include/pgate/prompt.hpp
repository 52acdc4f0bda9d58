#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pgate/episode.hpp"

namespace pgate {

// The five prompting approaches (v4 ships in two flavors). v4_protegi reuses
// v2's dialogue prompt and v5 reuses v3's, so there are six tags in total.
enum class PromptVariant { v1_baseline, v2_role, v3_improved, v4_claude, v4_protegi, v5_rule };

std::string to_string(PromptVariant variant);
PromptVariant variant_from_string(const std::string& s);
const std::vector<PromptVariant>& all_variants();

struct RenderContext {
    EpisodeSpec episode;
    // Calls executed this turn with their results; empty renders
    // "(no function calls this turn)".
    std::vector<std::pair<ToolCall, std::string>> function_results;
    std::vector<std::string> knowledge_selection;
};

RenderContext make_context(EpisodeSpec episode,
                           std::vector<std::pair<ToolCall, std::string>> results = {});

// Pure substitution into the checked-in templates; throws TemplateError when
// a placeholder cannot be filled. The function prompt requires the episode's
// last turn to be a user turn.
std::string render_function_prompt(PromptVariant variant, const RenderContext& ctx);
std::string render_dialogue_prompt(PromptVariant variant, const RenderContext& ctx);

// The five conservative turn rules, verbatim.
std::string csc_rules_text();

// Fixed suffix appended to the function prompt when the action-first
// backstop re-prompts.
std::string corrective_suffix(const RenderContext& ctx);
// Fixed instruction appended to the dialogue prompt when the turn plan asks
// for disambiguation.
std::string clarification_instruction();

std::string render_judge_prompt(const std::string& generated, const std::string& gold,
                                bool strict);
std::string render_gradient_prompt(const std::string& prompt, const std::string& successes,
                                   const std::string& failures);
std::string render_rewrite_prompt(const std::string& prompt, const std::string& gradient);
std::string render_zero_shot_improve(const std::string& prompt);

// APO candidates are arbitrary model output, so substitution is lenient:
// known placeholders are filled, anything else is left untouched, and a
// context block is appended when the candidate carries no placeholders.
std::string render_custom_function_prompt(const std::string& template_text,
                                          const RenderContext& ctx);

// Raw embedded templates, byte-identical to the files under templates/.
enum class TemplateId {
    v1_function,
    v1_dialogue,
    v2_dialogue,
    v3_function,
    v3_dialogue,
    v4_claude_function,
    v4_claude_dialogue,
    v4_protegi_function,
    v5_function,
    csc_rules,
    corrective_suffix,
    clarification_instruction,
    judge_prompt,
    judge_prompt_strict,
    gradient_prompt,
    rewrite_prompt,
    zero_shot_improve,
};

std::string_view template_text(TemplateId id);
// File name of the template under templates/ (for fidelity checks and docs).
std::string_view template_file_name(TemplateId id);

// {name} substitution with {{ }} escapes. An empty name pulls the next
// positional value. Throws TemplateError on unknown names, exhausted
// positionals, or an unterminated brace.
std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& named,
                       const std::vector<std::string>& positional = {});

}  // namespace pgate
