#include "doctest.h"

#include "pgate/apo.hpp"
#include "test_support.hpp"

using namespace pgate;
namespace ts = testsupport;

namespace {

ScriptEntry entry_at(int index, const std::string& text) {
    ScriptEntry e;
    e.at_index = index;
    e.response.text = text;
    return e;
}

ScriptEntry entry_contains(const std::string& needle, const std::string& text) {
    ScriptEntry e;
    e.if_last_contains = needle;
    e.response.text = text;
    return e;
}

ScriptEntry catch_all_agent() {
    ScriptEntry e;
    e.response.text = "a plain reply";
    e.response.calls.push_back(
        ts::make_call("check_basic_info", {{"item_name", std::string("Hunter's Bow")}}));
    return e;
}

const std::string kSeedPrompt =
    "Pick the single best tool.\n\n{dialogue[-1][\"text\"]}\n";

}  // namespace

TEST_CASE("rewrite_zero_shot returns the model reply verbatim") {
    Gateway backend(BackendConfig::mock_with(
        {entry_contains("# PROMPT", "IMPROVED: pick the one best tool.")}));
    CHECK(rewrite_zero_shot(backend, "pick a tool") == "IMPROVED: pick the one best tool.");
}

TEST_CASE("an empty rewrite reply is an error") {
    ScriptEntry empty;
    empty.response.text = "  ";
    Gateway backend(BackendConfig::mock_with({empty}));
    CHECK_THROWS_AS(rewrite_zero_shot(backend, "pick a tool"), EmptyRewrite);
    Gateway backend2(BackendConfig::mock_with({empty}));
    CHECK_THROWS_AS(rewrite_zero_shot(backend2, ""), std::invalid_argument);
}

TEST_CASE("a recorded zero-shot rewrite replays byte-stably") {
    auto cassette = ts::temp_path("rewrite-cassette");
    const std::string prompt = std::string(template_text(TemplateId::v1_function));
    std::string live;
    {
        Gateway backend(record_replay(
            BackendConfig::mock_with({entry_contains("# PROMPT", "the recorded rewrite")}),
            cassette, CassetteMode::Record));
        live = rewrite_zero_shot(backend, prompt);
    }
    BackendConfig replay_cfg;
    replay_cfg.cassette = cassette;
    replay_cfg.cassette_mode = CassetteMode::Replay;
    Gateway replayer(replay_cfg);
    CHECK(rewrite_zero_shot(replayer, prompt) == live);
    Gateway replayer2(replay_cfg);
    CHECK(rewrite_zero_shot(replayer2, prompt) == live);
    std::filesystem::remove(cassette);
}

TEST_CASE("apply_gradient through a recorded cassette replays the shorter candidate") {
    auto cassette = ts::temp_path("gradient-cassette");
    const std::string long_prompt =
        "This prompt is far too wordy and repeats itself at great length about tools.";
    GradientText grad{"the prompt is too verbose; shorten it", {}};
    std::vector<std::string> live;
    {
        Gateway backend(record_replay(
            BackendConfig::mock_with({entry_contains("# FEEDBACK", "Pick one tool.")}), cassette,
            CassetteMode::Record));
        live = apply_gradient(backend, long_prompt, grad, 1);
    }
    CHECK(live[0].size() < long_prompt.size());
    BackendConfig replay_cfg;
    replay_cfg.cassette = cassette;
    replay_cfg.cassette_mode = CassetteMode::Replay;
    Gateway replayer(replay_cfg);
    CHECK(apply_gradient(replayer, long_prompt, grad, 1) == live);
    std::filesystem::remove(cassette);
}

TEST_CASE("optimize with jobs=2 matches the sequential result for content scripts") {
    std::vector<EpisodeSpec> dataset = {ts::load_fixture("hunters_bow.episode.json"),
                                        ts::load_fixture("greeting.episode.json")};
    auto run_with_jobs = [&](int jobs) {
        Gateway backend(BackendConfig::mock_with({catch_all_agent()}));
        ScriptEntry five;
        five.response.text = "5";
        Gateway judge(BackendConfig::mock_with({five}));
        LoopConfig cfg;
        cfg.budget = 3;
        cfg.minibatch = 2;
        cfg.n_rewrites = 2;
        cfg.jobs = jobs;
        OptimizeResult result = optimize(backend, judge, kSeedPrompt, dataset, cfg);
        nlohmann::ordered_json out = nlohmann::ordered_json::array();
        for (const auto& cand : result.history) out.push_back(candidate_to_json(cand));
        return out.dump();
    };
    CHECK(run_with_jobs(1) == run_with_jobs(2));
}

TEST_CASE("generate_gradient embeds samples and returns the feedback") {
    BackendConfig cfg = BackendConfig::mock_with(
        {entry_contains("# FAILED SAMPLES", "The failures show wrong parameter keys.")});
    cfg.capture_requests = true;
    Gateway backend(cfg);

    std::vector<ScoredSample> failures = {
        {"ep1", "called sell(item_names=...)", "called sell(item_name=...)", 2}};
    GradientText grad = generate_gradient(backend, "prompt text", {}, failures);
    CHECK(grad.text.find("parameter keys") != std::string::npos);
    CHECK(grad.source_sample_ids == std::vector<std::string>{"ep1"});
    auto sent = backend.captured().at(0).messages.back().content;
    CHECK(sent.find("(no successes observed)") != std::string::npos);
    CHECK(sent.find("called sell(item_names=...)") != std::string::npos);
}

TEST_CASE("successes-only gradients note the absence of failures") {
    BackendConfig cfg =
        BackendConfig::mock_with({entry_contains("# FAILED SAMPLES", "keep going")});
    cfg.capture_requests = true;
    Gateway backend(cfg);
    std::vector<ScoredSample> successes = {{"ep1", "good reply", "good reply", 9}};
    GradientText grad = generate_gradient(backend, "prompt", successes, {});
    CHECK(grad.text == "keep going");
    CHECK(backend.captured().at(0).messages.back().content.find("(no failures observed)") !=
          std::string::npos);
}

TEST_CASE("generate_gradient requires at least one sample") {
    Gateway backend(BackendConfig::mock_with({}));
    CHECK_THROWS_AS(generate_gradient(backend, "prompt", {}, {}), std::invalid_argument);
}

TEST_CASE("apply_gradient makes n independent rewrite calls") {
    Gateway backend(
        BackendConfig::mock_with({entry_at(0, "candidate one"), entry_at(1, "candidate two")}));
    GradientText grad{"be specific", {}};
    auto rewrites = apply_gradient(backend, "prompt", grad, 2);
    REQUIRE(rewrites.size() == 2);
    CHECK(rewrites[0] == "candidate one");
    CHECK(rewrites[1] == "candidate two");
    CHECK(rewrites[0] != rewrites[1]);

    Gateway backend2(BackendConfig::mock_with({}));
    CHECK_THROWS_AS(apply_gradient(backend2, "p", grad, 0), std::invalid_argument);
}

TEST_CASE("an identity rewrite is tolerated (fixed point)") {
    Gateway backend(BackendConfig::mock_with({entry_contains("# FEEDBACK", "prompt")}));
    GradientText grad{"nothing to change", {}};
    auto rewrites = apply_gradient(backend, "prompt", grad, 1);
    CHECK(rewrites[0] == "prompt");
}

TEST_CASE("a constant judge plateaus after patience+1 iterations") {
    std::vector<EpisodeSpec> dataset = {ts::load_fixture("hunters_bow.episode.json")};
    Gateway backend(BackendConfig::mock_with({catch_all_agent()}));
    ScriptEntry five;
    five.response.text = "5";
    Gateway judge(BackendConfig::mock_with({five}));

    LoopConfig cfg;
    cfg.budget = 10;
    cfg.plateau_patience = 3;
    cfg.minibatch = 1;
    cfg.n_rewrites = 2;
    OptimizeResult result = optimize(backend, judge, kSeedPrompt, dataset, cfg);

    CHECK_FALSE(result.error.has_value());
    CHECK(result.iterations == cfg.plateau_patience + 1);
    CHECK(result.stop_reason == "plateau");
    CHECK(result.best.id == "seed");
    CHECK(result.incumbents.size() == 1);  // the seed never lost
}

TEST_CASE("the scripted hill switches incumbent exactly once and keeps GOLDEN") {
    std::vector<EpisodeSpec> dataset = {ts::load_fixture("hunters_bow.episode.json")};

    // Request order with a cached incumbent, minibatch=1, n_rewrites=1:
    // iter1: fn(0) dlg(1) grad(2) rewrite(3) fn(4) dlg(5)
    // iter2: grad(6) rewrite(7)=GOLDEN fn(8) dlg(9)=golden utterance
    // iter3+: grad rewrite fn dlg (plain, scores 3)
    std::vector<ScriptEntry> agent_script = {
        entry_at(7, "GOLDEN: always call check_basic_info first."),
        entry_at(9, "the golden utterance"),
        entry_contains("# FAILED SAMPLES", "name tools precisely"),
        entry_contains("# FEEDBACK", "plain rewrite"),
        catch_all_agent(),
    };
    Gateway backend(BackendConfig::mock_with(agent_script));

    std::vector<ScriptEntry> judge_script = {
        entry_contains("the golden utterance", "10"),
        entry_contains("", "3"),
    };
    Gateway judge(BackendConfig::mock_with(judge_script));

    LoopConfig cfg;
    cfg.budget = 10;
    cfg.plateau_patience = 3;
    cfg.minibatch = 1;
    cfg.n_rewrites = 1;
    OptimizeResult result = optimize(backend, judge, kSeedPrompt, dataset, cfg);

    CHECK_FALSE(result.error.has_value());
    CHECK(result.best.text.find("GOLDEN") != std::string::npos);
    CHECK(result.best.id == "cand-2-0");
    REQUIRE(result.incumbents.size() == 2);  // seed, then one switch
    CHECK(std::get<0>(result.incumbents[1]) == 2);  // the switch happened at iteration 2
    CHECK(std::get<2>(result.incumbents[1]) == 10.0);
    CHECK(result.iterations == 5);  // +3 plateau iterations after the switch
    // Lineage: later candidates descend from the golden incumbent.
    for (const auto& cand : result.history) {
        if (cand.id.rfind("cand-1-", 0) == 0 || cand.id.rfind("cand-2-", 0) == 0) {
            CHECK(cand.parent == std::optional<std::string>("seed"));
        }
        if (cand.id.rfind("cand-3-", 0) == 0) {
            CHECK(cand.parent == std::optional<std::string>("cand-2-0"));
        }
    }
}

TEST_CASE("budget=1 performs exactly one gradient step") {
    std::vector<EpisodeSpec> dataset = {ts::load_fixture("hunters_bow.episode.json")};
    Gateway backend(BackendConfig::mock_with({catch_all_agent()}));
    ScriptEntry nine;
    nine.response.text = "9";
    Gateway judge(BackendConfig::mock_with({nine}));

    LoopConfig cfg;
    cfg.budget = 1;
    cfg.minibatch = 1;
    OptimizeResult result = optimize(backend, judge, kSeedPrompt, dataset, cfg);
    CHECK(result.iterations == 1);
    CHECK(result.stop_reason == "budget");
    CHECK(result.history.size() == 1 + 2);  // seed + n_rewrites candidates
}

TEST_CASE("budget safety and monotone incumbents under adversarial scripts") {
    ts::Rng rng(31337);
    std::vector<EpisodeSpec> dataset = {ts::load_fixture("hunters_bow.episode.json"),
                                        ts::load_fixture("greeting.episode.json")};
    static const char* judge_replies[] = {"0", "3", "7", "10", "great!", "9 out of 10"};
    for (int trial = 0; trial < 100; ++trial) {
        ScriptEntry agent;
        agent.response.text = rng.words(4);
        if (rng.chance(0.7)) {
            agent.response.calls.push_back(ts::random_call(rng, dataset[0].tools));
        }
        Gateway backend(BackendConfig::mock_with({agent}));
        ScriptEntry judge_entry;
        judge_entry.response.text = judge_replies[rng.pick(0, 5)];
        Gateway judge(BackendConfig::mock_with({judge_entry}));

        LoopConfig cfg;
        cfg.budget = rng.pick(1, 4);
        cfg.plateau_patience = rng.pick(1, 3);
        cfg.minibatch = rng.pick(1, 2);
        cfg.n_rewrites = rng.pick(1, 2);
        cfg.seed = static_cast<unsigned>(trial);

        OptimizeResult result = optimize(backend, judge, kSeedPrompt, dataset, cfg);
        CHECK(result.iterations <= cfg.budget);
        // Accepted incumbents never lose ground.
        for (std::size_t i = 1; i < result.incumbents.size(); ++i) {
            CHECK(std::get<2>(result.incumbents[i]) > std::get<2>(result.incumbents[i - 1]));
        }
        // Lineage integrity.
        for (const auto& cand : result.history) {
            if (cand.id == "seed") continue;
            REQUIRE(cand.parent.has_value());
            bool found = false;
            for (const auto& other : result.history) found = found || other.id == *cand.parent;
            CHECK(found);
            CHECK(cand.gradient_applied.has_value());
        }
    }
}

TEST_CASE("optimize is deterministic for a fixed seed and scripts") {
    std::vector<EpisodeSpec> dataset = {ts::load_fixture("hunters_bow.episode.json"),
                                        ts::load_fixture("greeting.episode.json")};
    auto run_once = [&] {
        Gateway backend(BackendConfig::mock_with({catch_all_agent()}));
        ScriptEntry five;
        five.response.text = "5";
        Gateway judge(BackendConfig::mock_with({five}));
        LoopConfig cfg;
        cfg.budget = 4;
        cfg.minibatch = 2;
        cfg.seed = 42;
        OptimizeResult result = optimize(backend, judge, kSeedPrompt, dataset, cfg);
        nlohmann::ordered_json out = nlohmann::ordered_json::array();
        for (const auto& cand : result.history) out.push_back(candidate_to_json(cand));
        return out.dump();
    };
    CHECK(run_once() == run_once());
}

TEST_CASE("a gateway failure aborts with partial history preserved") {
    std::vector<EpisodeSpec> dataset = {ts::load_fixture("hunters_bow.episode.json")};
    // Only the seed evaluation is scripted; the gradient call dies. The
    // function stage proposes a call so the action-first backstop stays out
    // of the request sequence.
    ScriptEntry fn = catch_all_agent();
    fn.at_index = 0;
    Gateway backend(BackendConfig::mock_with({fn, entry_at(1, "reply")}));
    ScriptEntry five;
    five.response.text = "5";
    Gateway judge(BackendConfig::mock_with({five}));

    LoopConfig cfg;
    cfg.budget = 3;
    cfg.minibatch = 1;
    OptimizeResult result = optimize(backend, judge, kSeedPrompt, dataset, cfg);
    REQUIRE(result.error.has_value());
    CHECK(result.stop_reason == "error");
    CHECK(result.history.size() == 1);  // the seed survived
    CHECK(result.history[0].scores.size() == 1);
}

TEST_CASE("optimize validates its dataset preconditions") {
    Gateway backend(BackendConfig::mock_with({}));
    Gateway judge(BackendConfig::mock_with({}));
    LoopConfig cfg;
    CHECK_THROWS_AS(optimize(backend, judge, "p", {}, cfg), std::invalid_argument);

    EpisodeSpec no_gold = ts::load_fixture("hunters_bow.episode.json");
    no_gold.gold.reset();
    CHECK_THROWS_AS(optimize(backend, judge, "p", {no_gold}, cfg), std::invalid_argument);
}
