// persona-gate: single entry point exposing render / validate / run / eval /
// optimize over the core library. Machine-readable JSON goes to stdout,
// human logs to stderr. Exit codes: 0 success, 1 domain error, 2 usage.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "pgate/apo.hpp"
#include "pgate/enforcer.hpp"
#include "pgate/episode.hpp"
#include "pgate/gateway.hpp"
#include "pgate/metrics.hpp"
#include "pgate/prompt.hpp"
#include "pgate/runtime.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool flag_on_cmdline(int argc, char** argv, const std::string& name) {
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == name || arg.rfind(name + "=", 0) == 0) return true;
    }
    return false;
}

// Config precedence: flags > env vars > config file. CLI11 applies flags and
// config; env slots in between by overriding values that did not come from
// the command line itself.
void apply_env(std::string& value, bool cmdline, const char* env_name) {
    if (cmdline) return;
    if (const char* env = std::getenv(env_name)) value = env;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pgate::IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw pgate::IoError(dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() > 13 && name.rfind(".episode.json") == name.size() - 13) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw pgate::IoError("no *.episode.json files in " + dir.string());
    return files;
}

struct BackendFlags {
    std::string backend = "mock";
    std::string script_path;
    std::string cassette;
    bool record = false;
    std::string api_base;
    std::string api_key;
    std::string model;
    bool api_base_cli = false;
    bool api_key_cli = false;
    bool model_cli = false;
};

void add_backend_flags(CLI::App* cmd, BackendFlags& flags) {
    cmd->add_option("--backend", flags.backend, "Backend: mock, remote, or replay")
        ->check(CLI::IsMember({"mock", "remote", "replay"}));
    cmd->add_option("--script", flags.script_path, "Mock script file (.script.json)");
    cmd->add_option("--cassette", flags.cassette, "Cassette file for record/replay");
    cmd->add_flag("--record", flags.record, "Record live responses into --cassette");
    cmd->add_option("--api-base", flags.api_base, "Remote API base URL (env PG_API_BASE)");
    cmd->add_option("--api-key", flags.api_key, "Remote API key (env PG_API_KEY)");
    cmd->add_option("--model", flags.model, "Remote model name (env PG_MODEL)");
}

pgate::BackendConfig build_backend(const BackendFlags& flags) {
    pgate::BackendConfig cfg;
    if (flags.backend == "mock") {
        if (flags.script_path.empty() && flags.backend == "mock" && flags.cassette.empty()) {
            throw UsageError("--backend mock requires --script (or --cassette with --record)");
        }
        cfg.kind = pgate::BackendKind::Mock;
        if (!flags.script_path.empty()) cfg.script = pgate::load_script(flags.script_path);
    } else if (flags.backend == "remote") {
        cfg.kind = pgate::BackendKind::Remote;
        cfg.remote.base_url = flags.api_base;
        cfg.remote.api_key = flags.api_key;
        cfg.remote.model = flags.model;
    } else {  // replay
        if (flags.cassette.empty()) throw UsageError("--backend replay requires --cassette");
        cfg.cassette = flags.cassette;
        cfg.cassette_mode = pgate::CassetteMode::Replay;
        return cfg;
    }
    if (!flags.cassette.empty()) {
        cfg = pgate::record_replay(std::move(cfg), flags.cassette,
                                   flags.record ? pgate::CassetteMode::Record
                                                : pgate::CassetteMode::Replay);
    }
    return cfg;
}

void add_policy_flags(CLI::App* cmd, pgate::EnforcementPolicy& policy) {
    cmd->add_option("--max-calls", policy.max_calls, "Accepted calls per turn (default 1)");
    cmd->add_option("--hard-cap", policy.hard_cap, "Absolute call ceiling (default 4)");
    cmd->add_flag_callback("--no-repair", [&policy] { policy.allow_repair = false; },
                           "Disable parameter-key repair");
    cmd->add_option("--max-key-distance", policy.max_key_edit_distance,
                    "Edit-distance threshold for key repair (default 2)");
    cmd->add_flag_callback("--no-action-first", [&policy] { policy.action_first = false; },
                           "Disable the action-first check");
}

int cmd_render(const std::string& episode_path, const std::string& variant_name,
               const std::string& stage) {
    pgate::EpisodeSpec ep = pgate::load_episode(episode_path);
    pgate::PromptVariant variant = pgate::variant_from_string(variant_name);
    pgate::RenderContext ctx = pgate::make_context(std::move(ep));
    if (stage == "function") {
        std::cout << pgate::render_function_prompt(variant, ctx);
    } else if (stage == "dialogue") {
        std::cout << pgate::render_dialogue_prompt(variant, ctx);
    } else {
        std::cout << pgate::csc_rules_text();
    }
    return 0;
}

int cmd_validate(const std::string& calls_path, const std::string& tools_path,
                 const pgate::EnforcementPolicy& policy) {
    auto tools = pgate::load_tools(tools_path);
    auto calls = pgate::load_calls(calls_path);
    bool any_rejected = false;
    for (const auto& call : calls) {
        pgate::Verdict v = pgate::validate_call(call, tools, policy);
        any_rejected = any_rejected || v.kind == pgate::Verdict::Kind::Rejected;
        std::cout << pgate::verdict_to_json(v).dump() << "\n";
    }
    return any_rejected ? 1 : 0;
}

int cmd_run(const std::string& episode_path, const std::string& variant_name,
            const BackendFlags& backend_flags, const pgate::EnforcementPolicy& policy,
            int max_reprompts, bool timings) {
    pgate::AgentConfig cfg;
    cfg.variant = pgate::variant_from_string(variant_name);
    cfg.policy = policy;
    cfg.backend = build_backend(backend_flags);
    cfg.max_reprompts = max_reprompts;
    pgate::EpisodeSpec ep = pgate::load_episode(episode_path);

    pgate::EpisodeRun run = pgate::run_episode(ep, cfg);
    json traces = json::array();
    for (const auto& trace : run.traces) {
        traces.push_back(pgate::trace_to_json(trace, timings));
    }
    json out{{"episode", ep.id}, {"traces", std::move(traces)}};
    if (run.error) out["error"] = *run.error;
    std::cout << out.dump(2) << "\n";
    return run.error ? 1 : 0;
}

int cmd_eval(const std::string& dataset_dir, const std::string& predictions_path,
             bool call_level, bool skip_empty, int jobs) {
    auto files = dataset_files(dataset_dir);

    std::map<std::string, std::vector<pgate::ToolCall>> predictions;
    {
        json parsed;
        try {
            parsed = json::parse(read_text_file(predictions_path));
        } catch (const json::parse_error& e) {
            throw pgate::ParseError(predictions_path + ": " + e.what());
        }
        if (!parsed.is_array()) throw pgate::SchemaError("predictions: expected an array");
        for (std::size_t i = 0; i < parsed.size(); ++i) {
            const std::string path = "predictions[" + std::to_string(i) + "]";
            const json& entry = parsed[i];
            if (!entry.is_object() || !entry.contains("episode") || !entry.contains("calls")) {
                throw pgate::SchemaError(path + ": expected {episode, calls}");
            }
            std::vector<pgate::ToolCall> calls;
            for (std::size_t c = 0; c < entry["calls"].size(); ++c) {
                calls.push_back(pgate::call_from_json(
                    entry["calls"][c], path + ".calls[" + std::to_string(c) + "]"));
            }
            predictions[entry["episode"].get<std::string>()] = std::move(calls);
        }
    }

    // Load episodes (parallel when asked; order preserved by index).
    std::vector<pgate::EpisodeSpec> episodes(files.size());
    auto load_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) episodes[i] = pgate::load_episode(files[i]);
    };
    if (jobs > 1) {
        std::vector<std::future<void>> futures;
        std::size_t chunk = (files.size() + jobs - 1) / jobs;
        for (std::size_t begin = 0; begin < files.size(); begin += chunk) {
            std::size_t end = std::min(files.size(), begin + chunk);
            futures.push_back(std::async(std::launch::async, load_range, begin, end));
        }
        for (auto& f : futures) f.get();
    } else {
        load_range(0, files.size());
    }

    std::vector<std::pair<std::vector<pgate::ToolCall>, std::vector<pgate::ToolCall>>> turns;
    for (const auto& ep : episodes) {
        if (!ep.gold) throw pgate::SchemaError("episode '" + ep.id + "' has no gold annotation");
        auto it = predictions.find(ep.id);
        if (it == predictions.end()) {
            throw pgate::SchemaError("no prediction for episode '" + ep.id + "'");
        }
        turns.emplace_back(it->second, ep.gold->calls);
    }

    pgate::EvalOptions options;
    options.granularity =
        call_level ? pgate::MatchGranularity::Call : pgate::MatchGranularity::Turn;
    options.include_empty_turns = !skip_empty;
    pgate::MetricReport report = pgate::evaluate(turns, options);

    std::cout << pgate::report_to_json(report, options.granularity).dump(2) << "\n";
    std::cerr << pgate::format_report_table(report);
    return 0;
}

int cmd_optimize(const std::string& seed_prompt_path, const std::string& dataset_dir,
                 const std::string& out_dir, const BackendFlags& backend_flags,
                 const std::string& judge_script, const pgate::LoopConfig& loop,
                 const std::string& variant_name) {
    const std::string seed_prompt = read_text_file(seed_prompt_path);

    std::vector<pgate::EpisodeSpec> dataset;
    for (const auto& file : dataset_files(dataset_dir)) {
        dataset.push_back(pgate::load_episode(file));
    }

    pgate::BackendConfig backend_cfg = build_backend(backend_flags);
    pgate::BackendConfig judge_cfg;
    if (!judge_script.empty()) {
        judge_cfg = pgate::BackendConfig::mock_with(pgate::load_script(judge_script));
    } else if (backend_flags.backend == "remote") {
        judge_cfg = backend_cfg;
    } else {
        throw UsageError("optimize needs --judge-script for mock backends");
    }

    pgate::Gateway backend(backend_cfg);
    pgate::Gateway judge(judge_cfg);

    pgate::AgentConfig agent;
    agent.variant = pgate::variant_from_string(variant_name);

    pgate::OptimizeResult result =
        pgate::optimize(backend, judge, seed_prompt, dataset, loop, agent);

    fs::create_directories(out_dir);
    json history = json::array();
    for (const auto& cand : result.history) {
        json cj = pgate::candidate_to_json(cand);
        std::ofstream out(fs::path(out_dir) / (cand.id + ".json"), std::ios::binary);
        out << cj.dump(2) << "\n";
        history.push_back(std::move(cj));
    }
    {
        std::ofstream out(fs::path(out_dir) / "history.json", std::ios::binary);
        out << history.dump(2) << "\n";
    }

    double best_mean = result.best.scores.empty() ? 0.0 : result.best.scores.back().second;
    json summary{{"best", json{{"id", result.best.id},
                               {"text", result.best.text},
                               {"mean_score", best_mean}}},
                 {"iterations", result.iterations},
                 {"stop_reason", result.stop_reason},
                 {"candidates", result.history.size()},
                 {"run_dir", out_dir}};
    if (result.error) summary["error"] = *result.error;
    std::cout << summary.dump(2) << "\n";
    std::cerr << "optimize: " << result.iterations << " iteration(s), stop=" << result.stop_reason
              << ", best=" << result.best.id << "\n";
    return result.error ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"persona-gate: runtime and evaluation toolkit for tool-augmented "
                 "role-playing dialogue agents"};
    app.require_subcommand(1);
    app.set_config("--config", "persona-gate.toml", "TOML-style config file", false);

    // render
    auto* render = app.add_subcommand("render", "Render a prompt for an episode");
    std::string render_episode, render_variant = "v5_rule", render_stage = "function";
    render->add_option("--episode", render_episode, "Episode file (.episode.json)")->required();
    render->add_option("--variant", render_variant, "Prompt variant")
        ->check(CLI::IsMember({"v1_baseline", "v2_role", "v3_improved", "v4_claude",
                               "v4_protegi", "v5_rule", "v1", "v2", "v3", "v4.1", "v4.2",
                               "v5"}));
    render->add_option("--stage", render_stage, "Which prompt to render")
        ->check(CLI::IsMember({"function", "dialogue", "csc-rules"}));

    // validate
    auto* validate = app.add_subcommand("validate", "Validate tool calls against a tool set");
    std::string validate_calls, validate_tools;
    pgate::EnforcementPolicy validate_policy;
    validate->add_option("--calls", validate_calls, "JSON array of calls")->required();
    validate->add_option("--tools", validate_tools, "JSON array of tool specs")->required();
    add_policy_flags(validate, validate_policy);

    // run
    auto* run = app.add_subcommand("run", "Run an episode through the agent");
    std::string run_episode, run_variant = "v5_rule";
    BackendFlags run_backend;
    pgate::EnforcementPolicy run_policy;
    int run_reprompts = 1;
    bool run_timings = false;
    unsigned run_seed = 0;
    run->add_option("--episode", run_episode, "Episode file (.episode.json)")->required();
    run->add_option("--variant", run_variant, "Prompt variant")
        ->check(CLI::IsMember({"v1_baseline", "v2_role", "v3_improved", "v4_claude",
                               "v4_protegi", "v5_rule", "v1", "v2", "v3", "v4.1", "v4.2",
                               "v5"}));
    add_backend_flags(run, run_backend);
    add_policy_flags(run, run_policy);
    run->add_option("--max-reprompts", run_reprompts, "Action-first backstop retries (default 1)");
    run->add_flag("--timings", run_timings, "Include stage timings in the trace JSON");
    run->add_option("--seed", run_seed, "Reserved for sampling backends");

    // eval
    auto* eval = app.add_subcommand("eval", "Score predictions against gold annotations");
    std::string eval_dataset, eval_predictions;
    bool eval_call_level = false, eval_skip_empty = false;
    int eval_jobs = 1;
    eval->add_option("--dataset", eval_dataset, "Directory of *.episode.json files")->required();
    eval->add_option("--predictions", eval_predictions, "Predictions JSON file")->required();
    eval->add_flag("--call-level", eval_call_level, "Micro-average per call instead of per turn");
    eval->add_flag("--skip-empty-turns", eval_skip_empty,
                   "Exclude turns where prediction and gold are both empty");
    eval->add_option("--jobs", eval_jobs, "Concurrent episode loading (default 1)");

    // optimize
    auto* optimize = app.add_subcommand("optimize", "Textual-gradient prompt optimization");
    std::string opt_seed_prompt, opt_dataset, opt_out, opt_judge_script;
    std::string opt_variant = "v4_protegi";
    BackendFlags opt_backend;
    pgate::LoopConfig loop;
    optimize->add_option("--seed-prompt", opt_seed_prompt, "Seed prompt text file")->required();
    optimize->add_option("--dataset", opt_dataset, "Directory of gold-annotated episodes")
        ->required();
    optimize->add_option("--out", opt_out, "Run directory for candidate JSON files")->required();
    add_backend_flags(optimize, opt_backend);
    optimize->add_option("--judge-script", opt_judge_script, "Mock script for the judge");
    optimize->add_option("--variant", opt_variant, "Dialogue variant used during evaluation");
    optimize->add_option("--budget", loop.budget, "Optimization loop budget (default 10)");
    optimize->add_option("--minibatch", loop.minibatch, "Minibatch size (default 4)");
    optimize->add_option("--threshold", loop.success_threshold,
                         "Judge score counted as success (default 7)");
    optimize->add_option("--n-success", loop.n_success_samples, "Success samples per gradient");
    optimize->add_option("--n-failure", loop.n_failure_samples, "Failure samples per gradient");
    optimize->add_option("--n-rewrites", loop.n_rewrites, "Rewrites per iteration (default 2)");
    optimize->add_option("--patience", loop.plateau_patience, "Plateau patience (default 3)");
    optimize->add_option("--epsilon", loop.plateau_epsilon, "Plateau epsilon (default 0)");
    optimize->add_option("--seed", loop.seed, "RNG seed for minibatch/sample selection");
    optimize->add_option("--jobs", loop.jobs, "Concurrent candidate evaluation (default 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(render)) {
            return cmd_render(render_episode, render_variant, render_stage);
        }
        if (app.got_subcommand(validate)) {
            return cmd_validate(validate_calls, validate_tools, validate_policy);
        }
        if (app.got_subcommand(run)) {
            apply_env(run_backend.api_base, flag_on_cmdline(argc, argv, "--api-base"),
                      "PG_API_BASE");
            apply_env(run_backend.api_key, flag_on_cmdline(argc, argv, "--api-key"), "PG_API_KEY");
            apply_env(run_backend.model, flag_on_cmdline(argc, argv, "--model"), "PG_MODEL");
            return cmd_run(run_episode, run_variant, run_backend, run_policy, run_reprompts,
                           run_timings);
        }
        if (app.got_subcommand(eval)) {
            return cmd_eval(eval_dataset, eval_predictions, eval_call_level, eval_skip_empty,
                            eval_jobs);
        }
        if (app.got_subcommand(optimize)) {
            apply_env(opt_backend.api_base, flag_on_cmdline(argc, argv, "--api-base"),
                      "PG_API_BASE");
            apply_env(opt_backend.api_key, flag_on_cmdline(argc, argv, "--api-key"), "PG_API_KEY");
            apply_env(opt_backend.model, flag_on_cmdline(argc, argv, "--model"), "PG_MODEL");
            return cmd_optimize(opt_seed_prompt, opt_dataset, opt_out, opt_backend,
                                opt_judge_script, loop, opt_variant);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const pgate::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
