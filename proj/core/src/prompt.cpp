#include "pgate/prompt.hpp"

#include <algorithm>
#include <cctype>

#include "pgate/template_data.hpp"

namespace pgate {

namespace {

constexpr const char* kNone = "(none)";
constexpr const char* kNoCalls = "(no function calls this turn)";
constexpr const char* kLastUserKey = "dialogue[-1][\"text\"]";

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool icontains(const std::string& haystack, const std::string& needle) {
    if (needle.empty()) return false;
    return lower(haystack).find(lower(needle)) != std::string::npos;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string bullet_list(const std::vector<std::string>& items) {
    if (items.empty()) return kNone;
    std::vector<std::string> lines;
    lines.reserve(items.size());
    for (const auto& item : items) lines.push_back("- " + item);
    return join(lines, "\n");
}

std::string dot_list(const std::vector<std::string>& items) {
    if (items.empty()) return kNone;
    std::vector<std::string> lines;
    lines.reserve(items.size());
    for (const auto& item : items) lines.push_back("• " + item);
    return join(lines, "\n");
}

std::string call_line(const ToolCall& call, const std::string& result) {
    std::string out = call.name + "(";
    bool first = true;
    for (const auto& [key, value] : call.arguments) {
        if (!first) out += ", ";
        first = false;
        out += key + "=" + arg_to_display(value);
    }
    out += ") → " + result;
    return out;
}

std::string results_plain(const RenderContext& ctx) {
    if (ctx.function_results.empty()) return kNoCalls;
    std::vector<std::string> lines;
    for (const auto& [call, result] : ctx.function_results) lines.push_back(call_line(call, result));
    return join(lines, "\n");
}

std::string results_bulleted(const RenderContext& ctx) {
    if (ctx.function_results.empty()) return std::string("- ") + kNoCalls;
    std::vector<std::string> lines;
    for (const auto& [call, result] : ctx.function_results) {
        lines.push_back("- " + call_line(call, result));
    }
    return join(lines, "\n");
}

std::string history_lines(const std::vector<DialogueTurn>& turns) {
    if (turns.empty()) return kNone;
    std::vector<std::string> lines;
    lines.reserve(turns.size());
    for (const auto& turn : turns) {
        const char* speaker = turn.speaker == DialogueTurn::Speaker::User ? "user" : "assistant";
        lines.push_back(std::string(speaker) + ": " + turn.text);
    }
    return join(lines, "\n");
}

std::string state_lines(const SceneState& state) {
    if (state.empty()) return kNone;
    std::vector<std::string> lines;
    for (const auto& [k, v] : state.entries()) lines.push_back(k + ": " + v);
    return join(lines, "\n");
}

// Value for the "- {state details}" scaffold line: continuation entries carry
// their own bullet so every entry renders bulleted.
std::string state_bulleted_value(const SceneState& state) {
    if (state.empty()) return kNone;
    std::vector<std::string> lines;
    for (const auto& [k, v] : state.entries()) lines.push_back(k + ": " + v);
    return join(lines, "\n- ");
}

std::string persona_details_block(const Persona& p) {
    std::string out = "Name: " + (p.name.empty() ? "(unnamed)" : p.name);
    out += "\nTraits: " + (p.traits.empty() ? kNone : join(p.traits, "; "));
    if (!p.micro_rules.empty()) {
        out += "\nRules:";
        for (const auto& rule : p.micro_rules) out += "\n- " + rule;
    }
    return out;
}

std::string last_user_text(const EpisodeSpec& ep) {
    if (!ep.runnable()) {
        throw TemplateError(
            "cannot fill {dialogue[-1][\"text\"]}: the episode's last turn is not a user turn");
    }
    return ep.dialogue.back().text;
}

// Target items mentioned (case-insensitive substring) in the last 4 turns,
// annotated with world lore when available.
std::string relevant_item_lore(const RenderContext& ctx) {
    const auto& dialogue = ctx.episode.dialogue;
    std::size_t from = dialogue.size() > 4 ? dialogue.size() - 4 : 0;
    std::vector<std::string> lore;
    for (const auto& item : ctx.episode.target_items) {
        bool mentioned = false;
        for (std::size_t i = from; i < dialogue.size() && !mentioned; ++i) {
            mentioned = icontains(dialogue[i].text, item);
        }
        if (!mentioned) continue;
        std::string line = item;
        if (ctx.episode.world) {
            if (const auto* rec = ctx.episode.world->find_item(item)) {
                line += ": " + rec->description;
            }
        }
        lore.push_back(std::move(line));
    }
    return bullet_list(lore);
}

TemplateId function_template(PromptVariant variant) {
    switch (variant) {
        case PromptVariant::v1_baseline: return TemplateId::v1_function;
        case PromptVariant::v2_role: return TemplateId::v1_function;  // "Same as v1"
        case PromptVariant::v3_improved: return TemplateId::v3_function;
        case PromptVariant::v4_claude: return TemplateId::v4_claude_function;
        case PromptVariant::v4_protegi: return TemplateId::v4_protegi_function;
        case PromptVariant::v5_rule: return TemplateId::v5_function;
    }
    return TemplateId::v1_function;
}

TemplateId dialogue_template(PromptVariant variant) {
    switch (variant) {
        case PromptVariant::v1_baseline: return TemplateId::v1_dialogue;
        case PromptVariant::v2_role: return TemplateId::v2_dialogue;
        case PromptVariant::v3_improved: return TemplateId::v3_dialogue;
        case PromptVariant::v4_claude: return TemplateId::v4_claude_dialogue;
        case PromptVariant::v4_protegi: return TemplateId::v2_dialogue;  // "Same as v2"
        case PromptVariant::v5_rule: return TemplateId::v3_dialogue;     // "Same as v3"
    }
    return TemplateId::v1_dialogue;
}

}  // namespace

std::string to_string(PromptVariant variant) {
    switch (variant) {
        case PromptVariant::v1_baseline: return "v1_baseline";
        case PromptVariant::v2_role: return "v2_role";
        case PromptVariant::v3_improved: return "v3_improved";
        case PromptVariant::v4_claude: return "v4_claude";
        case PromptVariant::v4_protegi: return "v4_protegi";
        case PromptVariant::v5_rule: return "v5_rule";
    }
    return "v1_baseline";
}

PromptVariant variant_from_string(const std::string& s) {
    for (PromptVariant v : all_variants()) {
        if (to_string(v) == s) return v;
    }
    // Short tags are accepted too; v4 needs the explicit flavor.
    if (s == "v1") return PromptVariant::v1_baseline;
    if (s == "v2") return PromptVariant::v2_role;
    if (s == "v3") return PromptVariant::v3_improved;
    if (s == "v4.1") return PromptVariant::v4_claude;
    if (s == "v4.2") return PromptVariant::v4_protegi;
    if (s == "v5") return PromptVariant::v5_rule;
    throw Error("unknown prompt variant '" + s + "'");
}

const std::vector<PromptVariant>& all_variants() {
    static const std::vector<PromptVariant> variants = {
        PromptVariant::v1_baseline, PromptVariant::v2_role,     PromptVariant::v3_improved,
        PromptVariant::v4_claude,   PromptVariant::v4_protegi,  PromptVariant::v5_rule,
    };
    return variants;
}

RenderContext make_context(EpisodeSpec episode,
                           std::vector<std::pair<ToolCall, std::string>> results) {
    RenderContext ctx;
    ctx.knowledge_selection = episode.knowledge;
    ctx.episode = std::move(episode);
    ctx.function_results = std::move(results);
    return ctx;
}

std::string_view template_text(TemplateId id) {
    switch (id) {
        case TemplateId::v1_function: return tpl::v1_function;
        case TemplateId::v1_dialogue: return tpl::v1_dialogue;
        case TemplateId::v2_dialogue: return tpl::v2_dialogue;
        case TemplateId::v3_function: return tpl::v3_function;
        case TemplateId::v3_dialogue: return tpl::v3_dialogue;
        case TemplateId::v4_claude_function: return tpl::v4_claude_function;
        case TemplateId::v4_claude_dialogue: return tpl::v4_claude_dialogue;
        case TemplateId::v4_protegi_function: return tpl::v4_protegi_function;
        case TemplateId::v5_function: return tpl::v5_function;
        case TemplateId::csc_rules: return tpl::csc_rules;
        case TemplateId::corrective_suffix: return tpl::corrective_suffix;
        case TemplateId::clarification_instruction: return tpl::clarification_instruction;
        case TemplateId::judge_prompt: return tpl::judge_prompt;
        case TemplateId::judge_prompt_strict: return tpl::judge_prompt_strict;
        case TemplateId::gradient_prompt: return tpl::gradient_prompt;
        case TemplateId::rewrite_prompt: return tpl::rewrite_prompt;
        case TemplateId::zero_shot_improve: return tpl::zero_shot_improve;
    }
    return tpl::v1_function;
}

std::string_view template_file_name(TemplateId id) {
    switch (id) {
        case TemplateId::v1_function: return "v1_function.txt";
        case TemplateId::v1_dialogue: return "v1_dialogue.txt";
        case TemplateId::v2_dialogue: return "v2_dialogue.txt";
        case TemplateId::v3_function: return "v3_function.txt";
        case TemplateId::v3_dialogue: return "v3_dialogue.txt";
        case TemplateId::v4_claude_function: return "v4_claude_function.txt";
        case TemplateId::v4_claude_dialogue: return "v4_claude_dialogue.txt";
        case TemplateId::v4_protegi_function: return "v4_protegi_function.txt";
        case TemplateId::v5_function: return "v5_function.txt";
        case TemplateId::csc_rules: return "csc_rules.txt";
        case TemplateId::corrective_suffix: return "corrective_suffix.txt";
        case TemplateId::clarification_instruction: return "clarification_instruction.txt";
        case TemplateId::judge_prompt: return "judge_prompt.txt";
        case TemplateId::judge_prompt_strict: return "judge_prompt_strict.txt";
        case TemplateId::gradient_prompt: return "gradient_prompt.txt";
        case TemplateId::rewrite_prompt: return "rewrite_prompt.txt";
        case TemplateId::zero_shot_improve: return "zero_shot_improve.txt";
    }
    return "v1_function.txt";
}

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& named,
                       const std::vector<std::string>& positional) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t next_positional = 0;
    for (std::size_t i = 0; i < tmpl.size();) {
        char c = tmpl[i];
        if (c == '{') {
            if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
                out += '{';
                i += 2;
                continue;
            }
            auto end = tmpl.find('}', i + 1);
            if (end == std::string_view::npos) {
                throw TemplateError("unterminated placeholder at offset " + std::to_string(i));
            }
            std::string key(tmpl.substr(i + 1, end - i - 1));
            if (key.empty()) {
                if (next_positional >= positional.size()) {
                    throw TemplateError("no value left for positional placeholder {}");
                }
                out += positional[next_positional++];
            } else {
                auto it = named.find(key);
                if (it == named.end()) {
                    throw TemplateError("unfilled placeholder '{" + key + "}'");
                }
                out += it->second;
            }
            i = end + 1;
        } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            out += '}';
            i += 2;
        } else {
            out += c;
            ++i;
        }
    }
    return out;
}

std::string render_function_prompt(PromptVariant variant, const RenderContext& ctx) {
    const EpisodeSpec& ep = ctx.episode;
    const std::string targets = bullet_list(ep.target_items);
    switch (function_template(variant)) {
        case TemplateId::v4_claude_function:
            return substitute(tpl::v4_claude_function, {{kLastUserKey, last_user_text(ep)}},
                              {targets});
        case TemplateId::v4_protegi_function:
            return substitute(tpl::v4_protegi_function, {{"item_hint", targets},
                                                         {kLastUserKey, last_user_text(ep)}});
        case TemplateId::v5_function:
            // v5 carries the full history; the trailing user turn must still exist.
            last_user_text(ep);
            return substitute(tpl::v5_function, {{"target item list", targets},
                                                 {"full history", history_lines(ep.dialogue)}});
        case TemplateId::v3_function:
            return substitute(tpl::v3_function, {{"target item list", targets},
                                                 {kLastUserKey, last_user_text(ep)}});
        default:
            return substitute(tpl::v1_function, {{"target item list", targets},
                                                 {kLastUserKey, last_user_text(ep)}});
    }
}

std::string render_dialogue_prompt(PromptVariant variant, const RenderContext& ctx) {
    const EpisodeSpec& ep = ctx.episode;
    switch (dialogue_template(variant)) {
        case TemplateId::v1_dialogue:
            return substitute(tpl::v1_dialogue,
                              {{"role", ep.persona.role},
                               {"persona details", persona_details_block(ep.persona)},
                               {"function_results", results_plain(ctx)},
                               {"knowledge_info", bullet_list(ctx.knowledge_selection)},
                               {"worldview", ep.worldview},
                               {"dialogue", history_lines(ep.dialogue)}});
        case TemplateId::v2_dialogue:
            return substitute(tpl::v2_dialogue,
                              {{"role", ep.persona.role},
                               {"persona details", persona_details_block(ep.persona)},
                               {"state key/values", state_lines(ep.state)},
                               {"function_results", results_plain(ctx)},
                               {"knowledge_info", bullet_list(ctx.knowledge_selection)},
                               {"worldview", ep.worldview},
                               {"dialogue", history_lines(ep.dialogue)}});
        case TemplateId::v3_dialogue:
            return substitute(tpl::v3_dialogue,
                              {{"micro rules", dot_list(ep.persona.micro_rules)},
                               {"Persona Name", ep.persona.name.empty() ? "(unnamed)" : ep.persona.name},
                               {"Role", ep.persona.role},
                               {"traits and persona details", bullet_list(ep.persona.traits)},
                               {"state details", state_bulleted_value(ep.state)},
                               {"function results", results_bulleted(ctx)},
                               {"relevant item lore", relevant_item_lore(ctx)},
                               {"worldview text", ep.worldview},
                               {"user/assistant turns", history_lines(ep.dialogue)}});
        default:
            return substitute(tpl::v4_claude_dialogue, {},
                              {ep.persona.role, persona_details_block(ep.persona),
                               results_plain(ctx), bullet_list(ctx.knowledge_selection),
                               ep.worldview});
    }
}

std::string csc_rules_text() {
    return std::string(tpl::csc_rules);
}

std::string corrective_suffix(const RenderContext& ctx) {
    return substitute(tpl::corrective_suffix,
                      {{"target item list", bullet_list(ctx.episode.target_items)}});
}

std::string clarification_instruction() {
    return std::string(tpl::clarification_instruction);
}

std::string render_judge_prompt(const std::string& generated, const std::string& gold,
                                bool strict) {
    return substitute(strict ? tpl::judge_prompt_strict : tpl::judge_prompt,
                      {{"generated", generated}, {"gold", gold}});
}

std::string render_gradient_prompt(const std::string& prompt, const std::string& successes,
                                   const std::string& failures) {
    return substitute(tpl::gradient_prompt,
                      {{"prompt", prompt}, {"successes", successes}, {"failures", failures}});
}

std::string render_rewrite_prompt(const std::string& prompt, const std::string& gradient) {
    return substitute(tpl::rewrite_prompt, {{"prompt", prompt}, {"gradient", gradient}});
}

std::string render_zero_shot_improve(const std::string& prompt) {
    return substitute(tpl::zero_shot_improve, {{"prompt", prompt}});
}

std::string render_custom_function_prompt(const std::string& template_text,
                                          const RenderContext& ctx) {
    const EpisodeSpec& ep = ctx.episode;
    const std::map<std::string, std::string> known = {
        {"target item list", bullet_list(ep.target_items)},
        {"item_hint", bullet_list(ep.target_items)},
        {kLastUserKey, last_user_text(ep)},
        {"full history", history_lines(ep.dialogue)},
    };

    std::string out;
    out.reserve(template_text.size());
    bool saw_dialogue = false;
    for (std::size_t i = 0; i < template_text.size();) {
        char c = template_text[i];
        if (c != '{') {
            out += c;
            ++i;
            continue;
        }
        auto end = template_text.find('}', i + 1);
        if (end == std::string::npos) {
            out += template_text.substr(i);
            break;
        }
        std::string key = template_text.substr(i + 1, end - i - 1);
        auto it = known.find(key);
        if (it == known.end()) {
            // Arbitrary model output; keep unrecognized braces verbatim.
            out += template_text.substr(i, end - i + 1);
        } else {
            out += it->second;
            if (key == kLastUserKey || key == "full history") saw_dialogue = true;
        }
        i = end + 1;
    }
    if (!saw_dialogue) {
        out += "\n\n# ADDITIONAL INFORMATION\n" + bullet_list(ep.target_items) +
               "\n\n# DIALOGUE (User's Current Turn)\n" + last_user_text(ep) + "\n";
    }
    return out;
}

}  // namespace pgate
