#include "pgate/runtime.hpp"

#include <chrono>

namespace pgate {

using json = nlohmann::ordered_json;

namespace {

using steady_clock = std::chrono::steady_clock;

double ms_since(steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(steady_clock::now() - start).count();
}

}  // namespace

std::pair<TurnTrace, WorldDb> run_turn(const EpisodeSpec& ep, const WorldDb& world,
                                       const AgentConfig& cfg, Gateway& gateway) {
    if (!ep.runnable()) {
        throw Error("run_turn requires the episode's last turn to be a user turn");
    }

    TurnTrace trace;
    WorldDb current = world;
    const std::string user_text = ep.dialogue.back().text;
    const RenderContext fn_ctx = make_context(ep);

    auto render_function = [&](const std::string& base_suffix) {
        std::string prompt =
            cfg.function_prompt_override
                ? render_custom_function_prompt(*cfg.function_prompt_override, fn_ctx)
                : render_function_prompt(cfg.variant, fn_ctx);
        return prompt + base_suffix;
    };
    auto propose = [&](const std::string& prompt) {
        ChatRequest req;
        req.system = prompt;
        req.messages.push_back({ChatMessage::Role::User, user_text});
        req.tools = ep.tools;
        req.temperature = cfg.function_temperature;
        req.max_output_tokens = cfg.max_output_tokens;
        return gateway.complete(req);
    };

    // Stage 1: the model proposes calls.
    std::string fn_prompt = render_function("");
    auto t0 = steady_clock::now();
    ChatResponse fn_resp = propose(fn_prompt);
    trace.timings.push_back({"function_stage", ms_since(t0)});
    trace.proposed_calls = fn_resp.calls;

    // Stage 2: enforcement.
    t0 = steady_clock::now();
    trace.plan = enforce_turn(trace.proposed_calls, ep.tools, cfg.policy);
    trace.timings.push_back({"enforcement", ms_since(t0)});

    // Action-first backstop: re-run the function stage with a corrective
    // suffix while the violation persists and reprompts remain.
    std::string suffix;
    for (int attempt = 0;
         attempt < cfg.max_reprompts &&
         check_action_first(user_text, ep.target_items, trace.plan, cfg.policy);
         ++attempt) {
        trace.reprompted = true;
        suffix += "\n\n" + corrective_suffix(fn_ctx);
        fn_prompt = render_function(suffix);
        t0 = steady_clock::now();
        fn_resp = propose(fn_prompt);
        trace.timings.push_back({"function_stage_retry", ms_since(t0)});
        trace.proposed_calls = fn_resp.calls;
        trace.plan = enforce_turn(trace.proposed_calls, ep.tools, cfg.policy);
    }
    trace.function_prompt = fn_prompt;  // as last sent to the gateway

    // Stage 3: execution. A clarification turn executes nothing.
    t0 = steady_clock::now();
    if (!trace.plan.clarification_needed) {
        for (const auto& call : trace.plan.accepted) {
            auto [result, next] = execute(call, current);
            current = std::move(next);
            trace.executed.emplace_back(call, result);
        }
    }
    trace.timings.push_back({"execution", ms_since(t0)});

    // Stage 4: the model speaks, only after execution.
    RenderContext dlg_ctx = make_context(ep, trace.executed);
    std::string dlg_prompt = render_dialogue_prompt(cfg.variant, dlg_ctx);
    if (trace.plan.clarification_needed) {
        dlg_prompt += "\n\n" + clarification_instruction();
    }
    trace.dialogue_prompt = dlg_prompt;

    ChatRequest dlg_req;
    dlg_req.system = dlg_prompt;
    dlg_req.messages.push_back({ChatMessage::Role::User, user_text});
    dlg_req.temperature = cfg.dialogue_temperature;
    dlg_req.max_output_tokens = cfg.max_output_tokens;
    t0 = steady_clock::now();
    ChatResponse dlg_resp = gateway.complete(dlg_req);
    trace.timings.push_back({"dialogue_stage", ms_since(t0)});
    trace.utterance = dlg_resp.text.value_or("");

    return {std::move(trace), std::move(current)};
}

std::pair<TurnTrace, WorldDb> run_turn(const EpisodeSpec& ep, const WorldDb& world,
                                       const AgentConfig& cfg) {
    Gateway gateway(cfg.backend);
    return run_turn(ep, world, cfg, gateway);
}

EpisodeRun run_episode(const EpisodeSpec& ep, const AgentConfig& cfg, Gateway& gateway) {
    EpisodeRun run;
    run.final_world = ep.world.value_or(WorldDb{});

    // The working dialogue carries the original user turns plus the NPC turns
    // generated here; the episode's own npc turns are superseded.
    EpisodeSpec working = ep;
    working.dialogue.clear();

    for (const auto& turn : ep.dialogue) {
        if (turn.speaker != DialogueTurn::Speaker::User) continue;
        working.dialogue.push_back(turn);
        try {
            auto [trace, next_world] = run_turn(working, run.final_world, cfg, gateway);
            run.final_world = std::move(next_world);

            DialogueTurn npc;
            npc.speaker = DialogueTurn::Speaker::Npc;
            npc.text = trace.utterance;
            for (const auto& [call, result] : trace.executed) {
                npc.calls.push_back(call);
                npc.results.emplace_back(call, result);
            }
            working.dialogue.push_back(std::move(npc));
            run.traces.push_back(std::move(trace));
        } catch (const Error& e) {
            run.error = e.what();
            break;
        }
    }
    return run;
}

EpisodeRun run_episode(const EpisodeSpec& ep, const AgentConfig& cfg) {
    Gateway gateway(cfg.backend);
    return run_episode(ep, cfg, gateway);
}

json trace_to_json(const TurnTrace& trace, bool include_timings) {
    json proposed = json::array();
    for (const auto& call : trace.proposed_calls) proposed.push_back(call_to_json(call));
    json executed = json::array();
    for (const auto& [call, result] : trace.executed) {
        executed.push_back(json{{"call", call_to_json(call)}, {"result", result}});
    }
    json out{{"function_prompt", trace.function_prompt},
             {"proposed_calls", std::move(proposed)},
             {"plan", plan_to_json(trace.plan)},
             {"executed", std::move(executed)},
             {"dialogue_prompt", trace.dialogue_prompt},
             {"utterance", trace.utterance},
             {"reprompted", trace.reprompted}};
    if (include_timings) {
        json timings = json::array();
        for (const auto& t : trace.timings) {
            timings.push_back(json{{"stage", t.stage}, {"ms", t.ms}});
        }
        out["timings"] = std::move(timings);
    }
    return out;
}

}  // namespace pgate
