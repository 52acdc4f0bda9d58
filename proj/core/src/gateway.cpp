#include "pgate/gateway.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"

namespace pgate {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = kFnvOffset;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::string role_name(ChatMessage::Role role) {
    return role == ChatMessage::Role::User ? "user" : "assistant";
}

ChatMessage::Role role_from(const std::string& s) {
    if (s == "user") return ChatMessage::Role::User;
    if (s == "assistant") return ChatMessage::Role::Assistant;
    throw SchemaError("message role must be 'user' or 'assistant', got '" + s + "'");
}

json param_schema(const ParamSpec& p) {
    json schema;
    switch (p.type) {
        case ParamType::String: schema["type"] = "string"; break;
        case ParamType::StringList:
            schema["type"] = "array";
            schema["items"] = json{{"type", "string"}};
            break;
        case ParamType::Integer: schema["type"] = "integer"; break;
        case ParamType::Number: schema["type"] = "number"; break;
        case ParamType::Boolean: schema["type"] = "boolean"; break;
    }
    if (p.enum_values) schema["enum"] = *p.enum_values;
    return schema;
}

std::string scalar_to_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer() || v.is_number_unsigned()) {
        return std::to_string(v.get<std::int64_t>());
    }
    if (v.is_number_float()) {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v.get<double>());
        return std::string(buf, ptr);
    }
    throw DecodeError("cannot render value as string: " + v.dump(), v.dump());
}

std::optional<std::int64_t> parse_integer(const std::string& s) {
    std::int64_t value = 0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return value;
}

std::optional<double> parse_double(const std::string& s) {
    try {
        std::size_t pos = 0;
        double value = std::stod(s, &pos);
        if (pos != s.size()) return std::nullopt;
        return value;
    } catch (...) {
        return std::nullopt;
    }
}

// Coerces a provider JSON value; the declared type wins, anything that does
// not fit is a DecodeError (never a silently wrong type).
ArgValue coerce_value(const json& v, const ParamSpec* param, const std::string& raw) {
    if (!param) {
        // Unknown key or tool: keep the raw shape so the enforcer can judge it.
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>();
        if (v.is_number_integer() || v.is_number_unsigned()) return v.get<std::int64_t>();
        if (v.is_number_float()) return v.get<double>();
        if (v.is_array()) {
            std::vector<std::string> list;
            for (const auto& e : v) list.push_back(scalar_to_string(e));
            return list;
        }
        throw DecodeError("argument value has unsupported shape: " + v.dump(), raw);
    }
    switch (param->type) {
        case ParamType::String:
            if (v.is_object() || v.is_array() || v.is_null()) {
                throw DecodeError("cannot coerce " + v.dump() + " to string for '" +
                                      param->name + "'",
                                  raw);
            }
            return scalar_to_string(v);
        case ParamType::StringList: {
            if (!v.is_array()) {
                throw DecodeError("cannot coerce " + v.dump() + " to string_list for '" +
                                      param->name + "'",
                                  raw);
            }
            std::vector<std::string> list;
            for (const auto& e : v) {
                if (e.is_object() || e.is_array() || e.is_null()) {
                    throw DecodeError("string_list element has unsupported shape for '" +
                                          param->name + "'",
                                      raw);
                }
                list.push_back(scalar_to_string(e));
            }
            return list;
        }
        case ParamType::Integer: {
            if (v.is_number_integer() || v.is_number_unsigned()) return v.get<std::int64_t>();
            if (v.is_number_float()) {
                double d = v.get<double>();
                if (d == std::floor(d)) return static_cast<std::int64_t>(d);
            }
            if (v.is_string()) {
                if (auto parsed = parse_integer(v.get<std::string>())) return *parsed;
            }
            throw DecodeError("cannot coerce " + v.dump() + " to integer for '" + param->name +
                                  "'",
                              raw);
        }
        case ParamType::Number: {
            if (v.is_number_integer() || v.is_number_unsigned()) return v.get<std::int64_t>();
            if (v.is_number_float()) return v.get<double>();
            if (v.is_string()) {
                if (auto parsed = parse_double(v.get<std::string>())) return *parsed;
            }
            throw DecodeError("cannot coerce " + v.dump() + " to number for '" + param->name +
                                  "'",
                              raw);
        }
        case ParamType::Boolean: {
            if (v.is_boolean()) return v.get<bool>();
            if (v.is_string()) {
                const auto& s = v.get<std::string>();
                if (s == "true") return true;
                if (s == "false") return false;
            }
            throw DecodeError("cannot coerce " + v.dump() + " to boolean for '" + param->name +
                                  "'",
                              raw);
        }
    }
    throw DecodeError("unreachable coercion", raw);
}

}  // namespace

BackendConfig BackendConfig::mock_with(std::vector<ScriptEntry> script) {
    BackendConfig cfg;
    cfg.kind = BackendKind::Mock;
    cfg.script = std::move(script);
    return cfg;
}

BackendConfig BackendConfig::remote_from_env() {
    BackendConfig cfg;
    cfg.kind = BackendKind::Remote;
    if (const char* base = std::getenv("PG_API_BASE")) cfg.remote.base_url = base;
    if (const char* key = std::getenv("PG_API_KEY")) cfg.remote.api_key = key;
    if (const char* model = std::getenv("PG_MODEL")) cfg.remote.model = model;
    return cfg;
}

BackendConfig record_replay(BackendConfig base, std::filesystem::path cassette,
                            CassetteMode mode) {
    base.cassette = std::move(cassette);
    base.cassette_mode = mode;
    return base;
}

json request_to_json(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) {
        messages.push_back(json{{"role", role_name(m.role)}, {"content", m.content}});
    }
    json tools = json::array();
    for (const auto& t : req.tools) tools.push_back(tool_to_json(t));
    return json{{"system", req.system},
                {"messages", std::move(messages)},
                {"tools", std::move(tools)},
                {"temperature", req.temperature},
                {"max_output_tokens", req.max_output_tokens}};
}

ChatRequest request_from_json(const json& j) {
    ChatRequest req;
    req.system = j.at("system").get<std::string>();
    for (const auto& m : j.at("messages")) {
        req.messages.push_back(
            {role_from(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    }
    for (std::size_t i = 0; i < j.at("tools").size(); ++i) {
        req.tools.push_back(tool_from_json(j.at("tools")[i], "tools[" + std::to_string(i) + "]"));
    }
    req.temperature = j.at("temperature").get<double>();
    req.max_output_tokens = j.at("max_output_tokens").get<int>();
    return req;
}

json response_to_json(const ChatResponse& resp) {
    json calls = json::array();
    for (const auto& c : resp.calls) calls.push_back(call_to_json(c));
    json out;
    out["text"] = resp.text ? json(*resp.text) : json(nullptr);
    out["calls"] = std::move(calls);
    out["raw"] = resp.raw;
    return out;
}

ChatResponse response_from_json(const json& j) {
    ChatResponse resp;
    if (auto it = j.find("text"); it != j.end() && !it->is_null()) {
        resp.text = it->get<std::string>();
    }
    if (auto it = j.find("calls"); it != j.end()) {
        for (std::size_t i = 0; i < it->size(); ++i) {
            resp.calls.push_back(call_from_json((*it)[i], "calls[" + std::to_string(i) + "]"));
        }
    }
    if (auto it = j.find("raw"); it != j.end()) resp.raw = *it;
    return resp;
}

std::uint64_t request_fingerprint(const ChatRequest& req) {
    return fnv1a(request_to_json(req).dump());
}

json request_to_wire(const ChatRequest& req, const std::string& model) {
    json messages = json::array();
    messages.push_back(json{{"role", "system"}, {"content", req.system}});
    for (const auto& m : req.messages) {
        messages.push_back(json{{"role", role_name(m.role)}, {"content", m.content}});
    }
    json body{{"model", model},
              {"messages", std::move(messages)},
              {"temperature", req.temperature},
              {"max_tokens", req.max_output_tokens}};
    if (!req.tools.empty()) {
        json tools = json::array();
        for (const auto& t : req.tools) {
            json properties = json::object();
            json required = json::array();
            for (const auto& p : t.params) {
                properties[p.name] = param_schema(p);
                if (p.required) required.push_back(p.name);
            }
            tools.push_back(json{{"type", "function"},
                                 {"function",
                                  json{{"name", t.name},
                                       {"description", t.description},
                                       {"parameters", json{{"type", "object"},
                                                           {"properties", std::move(properties)},
                                                           {"required", std::move(required)}}}}}});
        }
        body["tools"] = std::move(tools);
    }
    return body;
}

ChatResponse response_from_wire(const std::string& payload,
                                const std::vector<ToolSpec>& tools) {
    json parsed;
    try {
        parsed = json::parse(payload);
    } catch (const json::parse_error& e) {
        throw DecodeError(std::string("provider payload is not JSON: ") + e.what(), payload);
    }
    if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
        parsed["choices"].empty()) {
        throw DecodeError("provider payload has no choices", payload);
    }
    const json& message = parsed["choices"][0].value("message", json::object());

    ChatResponse resp;
    resp.raw = parsed;
    if (message.contains("content") && message["content"].is_string()) {
        resp.text = message["content"].get<std::string>();
    }
    if (message.contains("tool_calls")) {
        if (!message["tool_calls"].is_array()) {
            throw DecodeError("tool_calls must be an array", payload);
        }
        for (const auto& tc : message["tool_calls"]) {
            const json& fn = tc.value("function", json::object());
            if (!fn.contains("name") || !fn["name"].is_string()) {
                throw DecodeError("tool call without a function name", payload);
            }
            ToolCall call;
            call.name = fn["name"].get<std::string>();

            json args = json::object();
            if (fn.contains("arguments")) {
                if (fn["arguments"].is_string()) {
                    try {
                        args = json::parse(fn["arguments"].get<std::string>());
                    } catch (const json::parse_error& e) {
                        throw DecodeError(
                            std::string("tool call arguments are not JSON: ") + e.what(), payload);
                    }
                } else if (fn["arguments"].is_object()) {
                    args = fn["arguments"];
                } else {
                    throw DecodeError("tool call arguments must be a JSON object or string",
                                      payload);
                }
            }
            if (!args.is_object()) {
                throw DecodeError("tool call arguments must decode to an object", payload);
            }

            const ToolSpec* spec = nullptr;
            for (const auto& t : tools) {
                if (t.name == call.name) {
                    spec = &t;
                    break;
                }
            }
            for (auto it = args.begin(); it != args.end(); ++it) {
                const ParamSpec* param = spec ? spec->find_param(it.key()) : nullptr;
                call.arguments[it.key()] = coerce_value(*it, param, payload);
            }
            resp.calls.push_back(std::move(call));
        }
    }
    if (!resp.has_payload()) {
        throw DecodeError("provider response carries neither text nor tool calls", payload);
    }
    return resp;
}

std::vector<ScriptEntry> script_from_json(const json& j) {
    if (!j.is_array()) throw SchemaError("script: expected an array");
    std::vector<ScriptEntry> script;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string path = "script[" + std::to_string(i) + "]";
        const json& ej = j[i];
        if (!ej.is_object()) throw SchemaError(path + ": expected an object");
        for (auto it = ej.begin(); it != ej.end(); ++it) {
            const std::string& k = it.key();
            if (k != "if_last_contains" && k != "at_index" && k != "response") {
                throw SchemaError(path + ": unknown field '" + k + "'");
            }
        }
        ScriptEntry entry;
        if (auto it = ej.find("if_last_contains"); it != ej.end()) {
            if (!it->is_string()) throw SchemaError(path + ".if_last_contains: expected a string");
            entry.if_last_contains = it->get<std::string>();
        }
        if (auto it = ej.find("at_index"); it != ej.end()) {
            if (!it->is_number_integer())
                throw SchemaError(path + ".at_index: expected an integer");
            entry.at_index = it->get<int>();
        }
        auto rit = ej.find("response");
        if (rit == ej.end()) throw SchemaError(path + ": missing field 'response'");
        entry.response = response_from_json(*rit);
        if (!entry.response.has_payload()) {
            throw SchemaError(path + ".response: needs text or calls");
        }
        script.push_back(std::move(entry));
    }
    return script;
}

std::vector<ScriptEntry> load_script(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return script_from_json(json::parse(buf.str()));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

Gateway::Gateway(BackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.cassette_mode == CassetteMode::Replay) {
        std::ifstream in(cfg_.cassette, std::ios::binary);
        if (!in) throw IoError("cannot open cassette " + cfg_.cassette.string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json entry;
            try {
                entry = json::parse(line);
            } catch (const json::parse_error& e) {
                throw ParseError("cassette " + cfg_.cassette.string() + ": " + e.what());
            }
            auto fp = std::stoull(entry.at("fingerprint").get<std::string>(), nullptr, 16);
            replay_.emplace(fp, response_from_json(entry.at("response")));
        }
    }
}

std::vector<ChatRequest> Gateway::captured() const {
    std::lock_guard lock(mu_);
    return captured_;
}

ChatResponse Gateway::complete(const ChatRequest& req) {
    if (req.messages.empty()) throw Error("ChatRequest.messages must be non-empty");
    if (req.temperature < 0.0) throw Error("ChatRequest.temperature must be >= 0");
    if (cfg_.capture_requests) {
        std::lock_guard lock(mu_);
        captured_.push_back(req);
    }

    if (cfg_.cassette_mode == CassetteMode::Replay) {
        const auto fp = request_fingerprint(req);
        std::lock_guard lock(mu_);
        auto it = replay_.find(fp);
        if (it == replay_.end()) {
            throw CassetteMiss("no recorded response for request fingerprint " +
                               std::to_string(fp));
        }
        return it->second;
    }

    ChatResponse resp =
        cfg_.kind == BackendKind::Mock ? complete_mock(req) : complete_remote(req);

    if (cfg_.cassette_mode == CassetteMode::Record) {
        std::lock_guard lock(mu_);
        std::ofstream out(cfg_.cassette, std::ios::binary | std::ios::app);
        if (!out) throw IoError("cannot open cassette " + cfg_.cassette.string() + " for append");
        char fp[32];
        std::snprintf(fp, sizeof fp, "%016llx",
                      static_cast<unsigned long long>(request_fingerprint(req)));
        json line{{"fingerprint", fp},
                  {"request", request_to_json(req)},
                  {"response", response_to_json(resp)}};
        out << line.dump() << "\n";
    }
    return resp;
}

ChatResponse Gateway::complete_mock(const ChatRequest& req) {
    std::lock_guard lock(mu_);
    const int index = served_++;
    const std::string& last = req.messages.back().content;
    for (const auto& entry : cfg_.script) {
        if (entry.at_index && *entry.at_index != index) continue;
        if (entry.if_last_contains &&
            last.find(*entry.if_last_contains) == std::string::npos) {
            continue;
        }
        return entry.response;
    }
    throw ScriptExhausted("no script entry matches request #" + std::to_string(index));
}

ChatResponse Gateway::complete_remote(const ChatRequest& req) {
    const RemoteConfig& rc = cfg_.remote;
    if (rc.base_url.empty()) throw TransportError("remote backend has no base URL (PG_API_BASE)");

    const std::string body = request_to_wire(req, rc.model).dump();
    httplib::Headers headers;
    if (!rc.api_key.empty()) headers.emplace("Authorization", "Bearer " + rc.api_key);

    thread_local std::mt19937 jitter_rng{std::random_device{}()};
    std::string last_error;
    for (int attempt = 0; attempt <= rc.max_retries; ++attempt) {
        if (attempt > 0) {
            std::uniform_int_distribution<int> jitter(0, std::max(1, rc.backoff_ms / 4));
            int delay = rc.backoff_ms * (1 << (attempt - 1)) + jitter(jitter_rng);
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
        httplib::Client client(rc.base_url);
        client.set_connection_timeout(0, rc.timeout_ms * 1000);
        client.set_read_timeout(rc.timeout_ms / 1000, (rc.timeout_ms % 1000) * 1000);
        auto result = client.Post("/chat/completions", headers, body, "application/json");
        if (!result) {
            last_error = "transport failure: " + httplib::to_string(result.error());
            continue;
        }
        if (result->status >= 200 && result->status < 300) {
            return response_from_wire(result->body, req.tools);
        }
        if (result->status >= 400 && result->status < 500) {
            throw ProviderError("provider returned " + std::to_string(result->status) + ": " +
                                result->body);
        }
        last_error = "provider returned " + std::to_string(result->status);
    }
    if (last_error.rfind("provider", 0) == 0) throw ProviderError(last_error + " after retries");
    throw TransportError(last_error + " after " + std::to_string(rc.max_retries) + " retries");
}

}  // namespace pgate
