#include "pgate/episode.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace pgate {

using json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void schema_fail(const std::string& path, const std::string& what) {
    throw SchemaError(path + ": " + what);
}

const json& expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) schema_fail(path, "expected an object");
    return j;
}

const json& expect_array(const json& j, const std::string& path) {
    if (!j.is_array()) schema_fail(path, "expected an array");
    return j;
}

std::string expect_string(const json& j, const std::string& path) {
    if (!j.is_string()) schema_fail(path, "expected a string");
    return j.get<std::string>();
}

bool expect_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) schema_fail(path, "expected a boolean");
    return j.get<bool>();
}

const json& require_key(const json& obj, const std::string& key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) schema_fail(path, "missing field '" + key + "'");
    return *it;
}

void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& path) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
            schema_fail(path, "unknown field '" + it.key() + "'");
        }
    }
}

std::vector<std::string> string_list(const json& j, const std::string& path) {
    expect_array(j, path);
    std::vector<std::string> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(expect_string(j[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

std::string format_double(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9.007199254740992e15) {
        return std::to_string(static_cast<long long>(v));
    }
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

void SceneState::set(std::string key, std::string value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    entries_.emplace_back(std::move(key), std::move(value));
}

const std::string* SceneState::find(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return &v;
    }
    return nullptr;
}

std::string to_string(ParamType type) {
    switch (type) {
        case ParamType::String: return "string";
        case ParamType::StringList: return "string_list";
        case ParamType::Integer: return "integer";
        case ParamType::Number: return "number";
        case ParamType::Boolean: return "boolean";
    }
    return "string";
}

ParamType param_type_from_string(const std::string& s, const std::string& path) {
    if (s == "string") return ParamType::String;
    if (s == "string_list") return ParamType::StringList;
    if (s == "integer") return ParamType::Integer;
    if (s == "number") return ParamType::Number;
    if (s == "boolean") return ParamType::Boolean;
    schema_fail(path, "unknown param type '" + s + "'");
}

const ParamSpec* ToolSpec::find_param(const std::string& param_name) const {
    for (const auto& p : params) {
        if (p.name == param_name) return &p;
    }
    return nullptr;
}

bool arg_matches_type(const ArgValue& value, ParamType type) {
    switch (type) {
        case ParamType::String: return std::holds_alternative<std::string>(value);
        case ParamType::StringList: return std::holds_alternative<std::vector<std::string>>(value);
        case ParamType::Integer: return std::holds_alternative<std::int64_t>(value);
        case ParamType::Number:
            return std::holds_alternative<std::int64_t>(value) ||
                   std::holds_alternative<double>(value);
        case ParamType::Boolean: return std::holds_alternative<bool>(value);
    }
    return false;
}

std::string arg_to_display(const ArgValue& value) {
    struct Visitor {
        std::string operator()(const std::string& s) const { return s; }
        std::string operator()(std::int64_t v) const { return std::to_string(v); }
        std::string operator()(double v) const { return format_double(v); }
        std::string operator()(bool v) const { return v ? "true" : "false"; }
        std::string operator()(const std::vector<std::string>& v) const {
            std::string out = "[";
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (i) out += ", ";
                out += v[i];
            }
            out += "]";
            return out;
        }
    };
    return std::visit(Visitor{}, value);
}

json arg_to_json(const ArgValue& value) {
    struct Visitor {
        json operator()(const std::string& s) const { return s; }
        json operator()(std::int64_t v) const { return v; }
        json operator()(double v) const { return v; }
        json operator()(bool v) const { return v; }
        json operator()(const std::vector<std::string>& v) const { return v; }
    };
    return std::visit(Visitor{}, value);
}

ArgValue arg_from_json(const json& j, const std::string& path) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer() || j.is_number_unsigned()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_array()) {
        std::vector<std::string> list;
        list.reserve(j.size());
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (!j[i].is_string()) {
                schema_fail(path + "[" + std::to_string(i) + "]",
                            "list arguments must contain strings");
            }
            list.push_back(j[i].get<std::string>());
        }
        return list;
    }
    schema_fail(path, "argument value must be a scalar or a list of strings");
}

std::string canonical_form(const ToolCall& call) {
    std::string out = call.name + "(";
    bool first = true;
    for (const auto& [key, value] : call.arguments) {
        if (!first) out += ", ";
        first = false;
        out += key + "=";
        if (const auto* s = std::get_if<std::string>(&value)) {
            out += trim(*s);
        } else if (const auto* list = std::get_if<std::vector<std::string>>(&value)) {
            auto sorted = *list;
            for (auto& item : sorted) item = trim(item);
            std::sort(sorted.begin(), sorted.end());
            out += arg_to_display(sorted);
        } else {
            out += arg_to_display(value);
        }
    }
    out += ")";
    return out;
}

json call_to_json(const ToolCall& call) {
    json args = json::object();
    for (const auto& [key, value] : call.arguments) {
        args[key] = arg_to_json(value);
    }
    return json{{"name", call.name}, {"arguments", std::move(args)}};
}

ToolCall call_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    reject_unknown_keys(j, {"name", "arguments"}, path);
    ToolCall call;
    call.name = expect_string(require_key(j, "name", path), path + ".name");
    if (call.name.empty()) schema_fail(path + ".name", "must be non-empty");
    const json& args = require_key(j, "arguments", path);
    expect_object(args, path + ".arguments");
    for (auto it = args.begin(); it != args.end(); ++it) {
        call.arguments[it.key()] = arg_from_json(*it, path + ".arguments." + it.key());
    }
    return call;
}

json tool_to_json(const ToolSpec& tool) {
    json params = json::array();
    for (const auto& p : tool.params) {
        json pj{{"name", p.name}, {"type", to_string(p.type)}, {"required", p.required}};
        if (p.enum_values) pj["enum_values"] = *p.enum_values;
        params.push_back(std::move(pj));
    }
    return json{{"name", tool.name}, {"description", tool.description},
                {"params", std::move(params)}};
}

ToolSpec tool_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    reject_unknown_keys(j, {"name", "description", "params"}, path);
    ToolSpec tool;
    tool.name = expect_string(require_key(j, "name", path), path + ".name");
    if (tool.name.empty()) schema_fail(path + ".name", "must be non-empty");
    tool.description = expect_string(require_key(j, "description", path), path + ".description");
    const json& params = expect_array(require_key(j, "params", path), path + ".params");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::string ppath = path + ".params[" + std::to_string(i) + "]";
        const json& pj = expect_object(params[i], ppath);
        reject_unknown_keys(pj, {"name", "type", "required", "enum_values"}, ppath);
        ParamSpec p;
        p.name = expect_string(require_key(pj, "name", ppath), ppath + ".name");
        if (p.name.empty()) schema_fail(ppath + ".name", "must be non-empty");
        if (!seen.insert(p.name).second) {
            schema_fail(ppath + ".name", "duplicate param '" + p.name + "'");
        }
        p.type = param_type_from_string(expect_string(require_key(pj, "type", ppath), ppath + ".type"),
                                        ppath + ".type");
        p.required = expect_bool(require_key(pj, "required", ppath), ppath + ".required");
        if (auto it = pj.find("enum_values"); it != pj.end()) {
            p.enum_values = string_list(*it, ppath + ".enum_values");
        }
        tool.params.push_back(std::move(p));
    }
    return tool;
}

namespace {

json persona_to_json(const Persona& p) {
    return json{{"role", p.role},
                {"name", p.name},
                {"traits", p.traits},
                {"micro_rules", p.micro_rules}};
}

Persona persona_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    reject_unknown_keys(j, {"role", "name", "traits", "micro_rules"}, path);
    Persona p;
    p.role = expect_string(require_key(j, "role", path), path + ".role");
    if (p.role.empty()) schema_fail(path + ".role", "must be non-empty");
    p.name = expect_string(require_key(j, "name", path), path + ".name");
    p.traits = string_list(require_key(j, "traits", path), path + ".traits");
    p.micro_rules = string_list(require_key(j, "micro_rules", path), path + ".micro_rules");
    return p;
}

json state_to_json(const SceneState& state) {
    json out = json::object();
    for (const auto& [k, v] : state.entries()) out[k] = v;
    return out;
}

SceneState state_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    SceneState state;
    for (auto it = j.begin(); it != j.end(); ++it) {
        state.set(it.key(), expect_string(*it, path + "." + it.key()));
    }
    return state;
}

json turn_to_json(const DialogueTurn& turn) {
    json out{{"speaker", turn.speaker == DialogueTurn::Speaker::User ? "user" : "npc"},
             {"text", turn.text}};
    if (!turn.calls.empty()) {
        json calls = json::array();
        for (const auto& c : turn.calls) calls.push_back(call_to_json(c));
        out["calls"] = std::move(calls);
    }
    if (!turn.results.empty()) {
        json results = json::array();
        for (const auto& [call, result] : turn.results) {
            results.push_back(json{{"call", call_to_json(call)}, {"result", result}});
        }
        out["results"] = std::move(results);
    }
    return out;
}

DialogueTurn turn_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    reject_unknown_keys(j, {"speaker", "text", "calls", "results"}, path);
    DialogueTurn turn;
    std::string speaker = expect_string(require_key(j, "speaker", path), path + ".speaker");
    if (speaker == "user") {
        turn.speaker = DialogueTurn::Speaker::User;
    } else if (speaker == "npc") {
        turn.speaker = DialogueTurn::Speaker::Npc;
    } else {
        schema_fail(path + ".speaker", "must be 'user' or 'npc'");
    }
    turn.text = expect_string(require_key(j, "text", path), path + ".text");
    if (auto it = j.find("calls"); it != j.end()) {
        expect_array(*it, path + ".calls");
        for (std::size_t i = 0; i < it->size(); ++i) {
            turn.calls.push_back(call_from_json((*it)[i], path + ".calls[" + std::to_string(i) + "]"));
        }
    }
    if (auto it = j.find("results"); it != j.end()) {
        expect_array(*it, path + ".results");
        for (std::size_t i = 0; i < it->size(); ++i) {
            std::string rpath = path + ".results[" + std::to_string(i) + "]";
            const json& rj = expect_object((*it)[i], rpath);
            reject_unknown_keys(rj, {"call", "result"}, rpath);
            turn.results.emplace_back(
                call_from_json(require_key(rj, "call", rpath), rpath + ".call"),
                expect_string(require_key(rj, "result", rpath), rpath + ".result"));
        }
    }
    if (turn.speaker == DialogueTurn::Speaker::User &&
        (!turn.calls.empty() || !turn.results.empty())) {
        schema_fail(path, "a user turn never carries calls/results");
    }
    return turn;
}

json gold_to_json(const GoldAnnotation& gold) {
    json calls = json::array();
    for (const auto& c : gold.calls) calls.push_back(call_to_json(c));
    return json{{"calls", std::move(calls)}, {"response", gold.response}};
}

GoldAnnotation gold_from_json(const json& j, const std::string& path) {
    expect_object(j, path);
    reject_unknown_keys(j, {"calls", "response"}, path);
    GoldAnnotation gold;
    const json& calls = expect_array(require_key(j, "calls", path), path + ".calls");
    for (std::size_t i = 0; i < calls.size(); ++i) {
        gold.calls.push_back(call_from_json(calls[i], path + ".calls[" + std::to_string(i) + "]"));
    }
    gold.response = expect_string(require_key(j, "response", path), path + ".response");
    return gold;
}

}  // namespace

const ToolSpec* EpisodeSpec::find_tool(const std::string& name) const {
    for (const auto& t : tools) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

bool EpisodeSpec::runnable() const {
    return !dialogue.empty() && dialogue.back().speaker == DialogueTurn::Speaker::User;
}

void validate(const EpisodeSpec& ep) {
    if (ep.id.empty()) schema_fail("id", "must be non-empty");
    if (ep.persona.role.empty()) schema_fail("persona.role", "must be non-empty");
    std::set<std::string> tool_names;
    for (std::size_t i = 0; i < ep.tools.size(); ++i) {
        if (!tool_names.insert(ep.tools[i].name).second) {
            schema_fail("tools[" + std::to_string(i) + "].name",
                        "duplicate tool '" + ep.tools[i].name + "'");
        }
    }
    if (ep.gold) {
        for (std::size_t i = 0; i < ep.gold->calls.size(); ++i) {
            const auto& call = ep.gold->calls[i];
            if (!ep.find_tool(call.name)) {
                schema_fail("gold.calls[" + std::to_string(i) + "].name",
                            "gold call references unknown tool '" + call.name + "'");
            }
        }
    }
    if (ep.world) {
        for (std::size_t i = 0; i < ep.world->inventory.size(); ++i) {
            const auto& entry = ep.world->inventory[i];
            if (!ep.world->find_item(entry.item)) {
                schema_fail("world.inventory[" + std::to_string(i) + "].item",
                            "inventory references unknown item '" + entry.item + "'");
            }
        }
    }
}

EpisodeSpec episode_from_json(const json& j) {
    expect_object(j, "episode");
    reject_unknown_keys(j,
                        {"id", "persona", "worldview", "state", "knowledge", "tools",
                         "target_items", "dialogue", "gold", "world"},
                        "episode");
    EpisodeSpec ep;
    ep.id = expect_string(require_key(j, "id", "episode"), "id");
    ep.persona = persona_from_json(require_key(j, "persona", "episode"), "persona");
    ep.worldview = expect_string(require_key(j, "worldview", "episode"), "worldview");
    ep.state = state_from_json(require_key(j, "state", "episode"), "state");
    ep.knowledge = string_list(require_key(j, "knowledge", "episode"), "knowledge");
    const json& tools = expect_array(require_key(j, "tools", "episode"), "tools");
    for (std::size_t i = 0; i < tools.size(); ++i) {
        ep.tools.push_back(tool_from_json(tools[i], "tools[" + std::to_string(i) + "]"));
    }
    ep.target_items = string_list(require_key(j, "target_items", "episode"), "target_items");
    const json& dialogue = expect_array(require_key(j, "dialogue", "episode"), "dialogue");
    for (std::size_t i = 0; i < dialogue.size(); ++i) {
        ep.dialogue.push_back(turn_from_json(dialogue[i], "dialogue[" + std::to_string(i) + "]"));
    }
    if (auto it = j.find("gold"); it != j.end()) {
        ep.gold = gold_from_json(*it, "gold");
    }
    if (auto it = j.find("world"); it != j.end()) {
        ep.world = world_from_json(*it, "world");
    }
    validate(ep);
    return ep;
}

json episode_to_json(const EpisodeSpec& ep) {
    json out;
    out["id"] = ep.id;
    out["persona"] = persona_to_json(ep.persona);
    out["worldview"] = ep.worldview;
    out["state"] = state_to_json(ep.state);
    out["knowledge"] = ep.knowledge;
    json tools = json::array();
    for (const auto& t : ep.tools) tools.push_back(tool_to_json(t));
    out["tools"] = std::move(tools);
    out["target_items"] = ep.target_items;
    json dialogue = json::array();
    for (const auto& t : ep.dialogue) dialogue.push_back(turn_to_json(t));
    out["dialogue"] = std::move(dialogue);
    if (ep.gold) out["gold"] = gold_to_json(*ep.gold);
    if (ep.world) out["world"] = world_to_json(*ep.world);
    return out;
}

std::string serialize_episode(const EpisodeSpec& ep) {
    return episode_to_json(ep).dump(2) + "\n";
}

namespace {

json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace

EpisodeSpec load_episode(const std::filesystem::path& path) {
    return episode_from_json(parse_file(path));
}

void save_episode(const EpisodeSpec& ep, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << serialize_episode(ep);
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<ToolSpec> load_tools(const std::filesystem::path& path) {
    const json j = parse_file(path);
    expect_array(j, "tools");
    std::vector<ToolSpec> tools;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < j.size(); ++i) {
        auto tool = tool_from_json(j[i], "tools[" + std::to_string(i) + "]");
        if (!seen.insert(tool.name).second) {
            schema_fail("tools[" + std::to_string(i) + "].name",
                        "duplicate tool '" + tool.name + "'");
        }
        tools.push_back(std::move(tool));
    }
    return tools;
}

std::vector<ToolCall> load_calls(const std::filesystem::path& path) {
    const json j = parse_file(path);
    expect_array(j, "calls");
    std::vector<ToolCall> calls;
    for (std::size_t i = 0; i < j.size(); ++i) {
        calls.push_back(call_from_json(j[i], "calls[" + std::to_string(i) + "]"));
    }
    return calls;
}

}  // namespace pgate
