#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgate/enforcer.hpp"
#include "pgate/episode.hpp"
#include "pgate/gateway.hpp"
#include "pgate/prompt.hpp"
#include "pgate/world.hpp"

namespace pgate {

struct AgentConfig {
    PromptVariant variant = PromptVariant::v5_rule;
    EnforcementPolicy policy;
    BackendConfig backend;
    int max_reprompts = 1;  // action-first backstop; 0 reproduces prompt-only behavior
    double function_temperature = 0.0;
    double dialogue_temperature = 0.0;
    int max_output_tokens = 1024;
    // APO hook: render this text (leniently) instead of the variant's
    // function template.
    std::optional<std::string> function_prompt_override;
};

struct StageTiming {
    std::string stage;
    double ms = 0.0;
};

// Audit record of one agent turn. Both prompts byte-match what the gateway
// was actually sent (the function prompt reflects the last attempt when the
// backstop re-prompted).
struct TurnTrace {
    std::string function_prompt;
    std::vector<ToolCall> proposed_calls;
    TurnPlan plan;
    std::vector<std::pair<ToolCall, std::string>> executed;  // subset of plan.accepted, in order
    std::string dialogue_prompt;
    std::string utterance;
    bool reprompted = false;
    std::vector<StageTiming> timings;  // entries appear in stage execution order
};

// One NPC turn: render function prompt → propose calls → enforce → execute
// → render dialogue prompt → speak. The utterance is always generated after
// execution. Requires ep's last turn to be a user turn.
std::pair<TurnTrace, WorldDb> run_turn(const EpisodeSpec& ep, const WorldDb& world,
                                       const AgentConfig& cfg, Gateway& gateway);
// Convenience overload owning a one-off gateway built from cfg.backend.
std::pair<TurnTrace, WorldDb> run_turn(const EpisodeSpec& ep, const WorldDb& world,
                                       const AgentConfig& cfg);

struct EpisodeRun {
    std::vector<TurnTrace> traces;
    WorldDb final_world;
    // Set when a backend error aborted the episode; traces holds the turns
    // completed before the failure.
    std::optional<std::string> error;
};

// Replays the episode's user turns in order, threading the world and
// appending each generated NPC turn to the working dialogue.
EpisodeRun run_episode(const EpisodeSpec& ep, const AgentConfig& cfg);
EpisodeRun run_episode(const EpisodeSpec& ep, const AgentConfig& cfg, Gateway& gateway);

nlohmann::ordered_json trace_to_json(const TurnTrace& trace, bool include_timings = false);

}  // namespace pgate
