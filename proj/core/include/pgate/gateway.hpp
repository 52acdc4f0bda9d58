#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgate/episode.hpp"

namespace pgate {

struct ChatMessage {
    enum class Role { User, Assistant };
    Role role = Role::User;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string system;
    std::vector<ChatMessage> messages;  // non-empty
    std::vector<ToolSpec> tools;        // empty = no tools offered
    double temperature = 0.0;
    int max_output_tokens = 1024;

    bool operator==(const ChatRequest&) const = default;
};

struct ChatResponse {
    std::optional<std::string> text;
    std::vector<ToolCall> calls;
    nlohmann::ordered_json raw;  // opaque provider payload for audit

    bool has_payload() const { return text.has_value() || !calls.empty(); }
};

// One scripted exchange. Entries are scanned in order and the first match
// wins; an entry with no predicate matches every request.
struct ScriptEntry {
    std::optional<std::string> if_last_contains;  // substring of the last message
    std::optional<int> at_index;                  // 0-based request ordinal
    ChatResponse response;
};

struct RemoteConfig {
    std::string base_url;  // PG_API_BASE
    std::string api_key;   // PG_API_KEY
    std::string model;     // PG_MODEL
    int max_retries = 3;   // transport errors only, jittered exponential backoff
    int backoff_ms = 250;
    int timeout_ms = 30000;
};

enum class BackendKind { Mock, Remote };
enum class CassetteMode { Off, Record, Replay };

struct BackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::vector<ScriptEntry> script;  // mock backend
    RemoteConfig remote;              // remote backend
    std::filesystem::path cassette;
    CassetteMode cassette_mode = CassetteMode::Off;
    // Test hook: keep a copy of every request sent through the gateway.
    bool capture_requests = false;

    static BackendConfig mock_with(std::vector<ScriptEntry> script);
    // Reads PG_API_BASE / PG_API_KEY / PG_MODEL.
    static BackendConfig remote_from_env();
};

// Wraps a backend so live responses are persisted (record) or served back
// byte-identically (replay), keyed by request fingerprint.
BackendConfig record_replay(BackendConfig base, std::filesystem::path cassette,
                            CassetteMode mode);

// Uniform chat-completion client over the mock and remote backends.
// Thread-safe; the mock serializes matching so scripts behave sequentially.
class Gateway {
public:
    explicit Gateway(BackendConfig cfg);

    ChatResponse complete(const ChatRequest& req);

    // Requests seen so far, in order (only when cfg.capture_requests).
    std::vector<ChatRequest> captured() const;

private:
    ChatResponse complete_mock(const ChatRequest& req);
    ChatResponse complete_remote(const ChatRequest& req);

    BackendConfig cfg_;
    mutable std::mutex mu_;
    int served_ = 0;
    std::map<std::uint64_t, ChatResponse> replay_;
    std::vector<ChatRequest> captured_;
};

// Wire helpers, exposed for tests and the cassette format.
nlohmann::ordered_json request_to_json(const ChatRequest& req);
ChatRequest request_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json response_to_json(const ChatResponse& resp);
ChatResponse response_from_json(const nlohmann::ordered_json& j);

// FNV-1a over the canonical request JSON; the cassette key.
std::uint64_t request_fingerprint(const ChatRequest& req);

// OpenAI-compatible body for POST {base}/chat/completions.
nlohmann::ordered_json request_to_wire(const ChatRequest& req, const std::string& model);
// Parses a provider payload; tool-call argument strings are type-coerced per
// the matching ToolSpec. Throws DecodeError (carrying the raw payload) when
// the payload is unparseable or a value cannot coerce to its declared type.
ChatResponse response_from_wire(const std::string& payload,
                                const std::vector<ToolSpec>& tools);

std::vector<ScriptEntry> script_from_json(const nlohmann::ordered_json& j);
std::vector<ScriptEntry> load_script(const std::filesystem::path& path);

}  // namespace pgate
