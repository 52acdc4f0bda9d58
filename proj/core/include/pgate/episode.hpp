#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgate/errors.hpp"
#include "pgate/world.hpp"

namespace pgate {

struct Persona {
    std::string role;   // non-empty
    std::string name;
    std::vector<std::string> traits;
    std::vector<std::string> micro_rules;  // behavioral if-then rules

    bool operator==(const Persona&) const = default;
};

// Ordered key/value scene state. Serialization order is insertion order so
// prompt rendering stays deterministic.
class SceneState {
public:
    // Inserts, or overwrites in place when the key already exists.
    void set(std::string key, std::string value);
    const std::string* find(const std::string& key) const;
    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    bool operator==(const SceneState&) const = default;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

enum class ParamType { String, StringList, Integer, Number, Boolean };

std::string to_string(ParamType type);
ParamType param_type_from_string(const std::string& s, const std::string& path);

struct ParamSpec {
    std::string name;
    ParamType type = ParamType::String;
    bool required = false;
    std::optional<std::vector<std::string>> enum_values;

    bool operator==(const ParamSpec&) const = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ParamSpec> params;  // names unique within the tool

    const ParamSpec* find_param(const std::string& name) const;

    bool operator==(const ToolSpec&) const = default;
};

// Concrete argument value: scalar or list of strings. No placeholders.
using ArgValue = std::variant<std::string, std::int64_t, double, bool, std::vector<std::string>>;

bool arg_matches_type(const ArgValue& value, ParamType type);
// Unquoted form used in "func(arg=val)" prompt lines.
std::string arg_to_display(const ArgValue& value);
nlohmann::ordered_json arg_to_json(const ArgValue& value);
ArgValue arg_from_json(const nlohmann::ordered_json& j, const std::string& path);

struct ToolCall {
    std::string name;
    std::map<std::string, ArgValue> arguments;  // unique keys, sorted

    bool operator==(const ToolCall&) const = default;
};

// Stable text form ("name(k=v, ...)" with trimmed strings and sorted list
// args) used as the dedup key and in diagnostics.
std::string canonical_form(const ToolCall& call);

nlohmann::ordered_json call_to_json(const ToolCall& call);
ToolCall call_from_json(const nlohmann::ordered_json& j, const std::string& path);

struct DialogueTurn {
    enum class Speaker { User, Npc };

    Speaker speaker = Speaker::User;
    std::string text;
    // Tool activity; only npc turns may carry these.
    std::vector<ToolCall> calls;
    std::vector<std::pair<ToolCall, std::string>> results;

    bool operator==(const DialogueTurn&) const = default;
};

struct GoldAnnotation {
    std::vector<ToolCall> calls;  // empty = a no-call turn is the gold label
    std::string response;

    bool operator==(const GoldAnnotation&) const = default;
};

// One full scenario: the shared vocabulary of every other module.
struct EpisodeSpec {
    std::string id;
    Persona persona;
    std::string worldview;
    SceneState state;
    std::vector<std::string> knowledge;
    std::vector<ToolSpec> tools;
    std::vector<std::string> target_items;
    std::vector<DialogueTurn> dialogue;
    std::optional<GoldAnnotation> gold;
    std::optional<WorldDb> world;

    const ToolSpec* find_tool(const std::string& name) const;
    // True when the episode can be handed to the agent runtime.
    bool runnable() const;

    bool operator==(const EpisodeSpec&) const = default;
};

// Throws SchemaError naming the offending path on any invariant violation.
void validate(const EpisodeSpec& ep);

EpisodeSpec episode_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json episode_to_json(const EpisodeSpec& ep);

// Deterministic bytes: fixed field order, 2-space indent, trailing newline.
std::string serialize_episode(const EpisodeSpec& ep);

EpisodeSpec load_episode(const std::filesystem::path& path);
void save_episode(const EpisodeSpec& ep, const std::filesystem::path& path);

// Standalone tool-set / call-list files used by the validate subcommand.
std::vector<ToolSpec> load_tools(const std::filesystem::path& path);
std::vector<ToolCall> load_calls(const std::filesystem::path& path);

nlohmann::ordered_json tool_to_json(const ToolSpec& tool);
ToolSpec tool_from_json(const nlohmann::ordered_json& j, const std::string& path);

}  // namespace pgate
