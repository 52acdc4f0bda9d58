#include "pgate/apo.hpp"

#include <algorithm>
#include <future>
#include <numeric>
#include <random>

#include "pgate/metrics.hpp"
#include "pgate/prompt.hpp"

namespace pgate {

using json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::string sample_block(const std::vector<ScoredSample>& samples, const char* empty_note) {
    if (samples.empty()) return std::string("(") + empty_note + ")";
    std::string out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i) out += "\n";
        out += "- [sample " + samples[i].id + ", score " + std::to_string(samples[i].score) +
               "] generated: " + samples[i].generated + " | expected: " + samples[i].expected;
    }
    return out;
}

void sample_down(std::vector<ScoredSample>& samples, int limit, std::mt19937& rng) {
    if (limit < 0) limit = 0;
    if (static_cast<int>(samples.size()) <= limit) return;
    std::vector<ScoredSample> picked;
    std::sample(samples.begin(), samples.end(), std::back_inserter(picked),
                static_cast<std::size_t>(limit), rng);
    samples = std::move(picked);
}

struct EvalOutcome {
    std::vector<ScoredSample> samples;
    double mean = 0.0;
};

EvalOutcome evaluate_candidate(Gateway& backend, Gateway& judge, const std::string& text,
                               const std::vector<EpisodeSpec>& minibatch,
                               const AgentConfig& agent_base) {
    AgentConfig cfg = agent_base;
    cfg.function_prompt_override = text;

    EvalOutcome outcome;
    double total = 0.0;
    for (const auto& ep : minibatch) {
        auto [trace, world] = run_turn(ep, ep.world.value_or(WorldDb{}), cfg, backend);
        std::string generated = trace.utterance.empty() ? "(empty reply)" : trace.utterance;
        const std::string& expected = ep.gold->response;
        JudgeScore score = judge_response(judge, generated, expected);
        total += score.value;
        outcome.samples.push_back({ep.id, std::move(generated), expected, score.value});
    }
    outcome.mean = minibatch.empty() ? 0.0 : total / static_cast<double>(minibatch.size());
    return outcome;
}

}  // namespace

std::string rewrite_zero_shot(Gateway& backend, const std::string& prompt) {
    if (prompt.empty()) throw std::invalid_argument("rewrite_zero_shot requires a non-empty prompt");
    ChatRequest req;
    req.system = "You improve prompts.";
    req.messages.push_back({ChatMessage::Role::User, render_zero_shot_improve(prompt)});
    ChatResponse resp = backend.complete(req);
    std::string text = resp.text.value_or("");
    if (trim(text).empty()) throw EmptyRewrite("rewrite backend returned an empty prompt");
    return text;
}

GradientText generate_gradient(Gateway& backend, const std::string& prompt,
                               const std::vector<ScoredSample>& successes,
                               const std::vector<ScoredSample>& failures) {
    if (successes.empty() && failures.empty()) {
        throw std::invalid_argument("generate_gradient requires at least one sample");
    }
    ChatRequest req;
    req.system = "You analyze prompt failures.";
    req.messages.push_back(
        {ChatMessage::Role::User,
         render_gradient_prompt(prompt, sample_block(successes, "no successes observed"),
                                sample_block(failures, "no failures observed"))});
    ChatResponse resp = backend.complete(req);
    GradientText grad;
    grad.text = resp.text.value_or("");
    if (trim(grad.text).empty()) throw Error("gradient backend returned empty feedback");
    for (const auto& s : successes) grad.source_sample_ids.push_back(s.id);
    for (const auto& s : failures) grad.source_sample_ids.push_back(s.id);
    return grad;
}

std::vector<std::string> apply_gradient(Gateway& backend, const std::string& prompt,
                                        const GradientText& gradient, int n) {
    if (n < 1) throw std::invalid_argument("apply_gradient requires n >= 1");
    std::vector<std::string> rewrites;
    rewrites.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ChatRequest req;
        req.system = "You improve prompts.";
        req.messages.push_back(
            {ChatMessage::Role::User, render_rewrite_prompt(prompt, gradient.text)});
        ChatResponse resp = backend.complete(req);
        std::string text = resp.text.value_or("");
        if (trim(text).empty()) throw EmptyRewrite("rewrite " + std::to_string(i) + " is empty");
        rewrites.push_back(std::move(text));
    }
    return rewrites;
}

OptimizeResult optimize(Gateway& backend, Gateway& judge, const std::string& seed_prompt,
                        const std::vector<EpisodeSpec>& dataset, const LoopConfig& cfg,
                        const AgentConfig& agent_base) {
    if (dataset.empty()) throw std::invalid_argument("optimize requires a non-empty dataset");
    for (const auto& ep : dataset) {
        if (!ep.gold) {
            throw std::invalid_argument("optimize requires gold annotations; episode '" + ep.id +
                                        "' has none");
        }
        if (!ep.runnable()) {
            throw std::invalid_argument("episode '" + ep.id + "' does not end on a user turn");
        }
    }

    std::mt19937 rng(cfg.seed);

    // One seeded minibatch reused across the whole run, so every comparison
    // between incumbent and challengers is paired.
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t batch_size =
        std::min(dataset.size(), static_cast<std::size_t>(std::max(1, cfg.minibatch)));
    std::vector<EpisodeSpec> minibatch;
    minibatch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) minibatch.push_back(dataset[order[i]]);

    OptimizeResult result;
    result.history.push_back(CandidatePrompt{"seed", seed_prompt, std::nullopt, std::nullopt, {}});
    std::size_t best_index = 0;
    EvalOutcome best_eval;
    bool best_evaluated = false;

    double prev_best_mean = 0.0;
    int plateau = 0;
    int completed = 0;
    result.stop_reason = "budget";

    try {
        for (int iter = 1; iter <= cfg.budget; ++iter) {
            if (!best_evaluated) {
                best_eval = evaluate_candidate(backend, judge, result.history[best_index].text,
                                               minibatch, agent_base);
                best_evaluated = true;
                result.incumbents.emplace_back(iter, result.history[best_index].id,
                                               best_eval.mean);
            }
            result.history[best_index].scores.emplace_back(iter, best_eval.mean);

            std::vector<ScoredSample> successes;
            std::vector<ScoredSample> failures;
            for (const auto& s : best_eval.samples) {
                (s.score >= cfg.success_threshold ? successes : failures).push_back(s);
            }
            sample_down(successes, cfg.n_success_samples, rng);
            sample_down(failures, cfg.n_failure_samples, rng);
            if (successes.empty() && failures.empty()) {
                // Sampling clamped both sides away; keep one sample so the
                // gradient stage always has evidence.
                failures.push_back(best_eval.samples.front());
            }

            const std::string incumbent_id = result.history[best_index].id;
            const std::string incumbent_text = result.history[best_index].text;
            GradientText gradient = generate_gradient(backend, incumbent_text, successes, failures);
            const int n_rewrites = std::max(1, cfg.n_rewrites);
            std::vector<std::string> rewrites =
                apply_gradient(backend, incumbent_text, gradient, n_rewrites);

            std::vector<EvalOutcome> evals(rewrites.size());
            if (cfg.jobs > 1) {
                std::vector<std::future<EvalOutcome>> futures;
                futures.reserve(rewrites.size());
                for (const auto& text : rewrites) {
                    futures.push_back(std::async(std::launch::async, [&, text] {
                        return evaluate_candidate(backend, judge, text, minibatch, agent_base);
                    }));
                }
                for (std::size_t k = 0; k < futures.size(); ++k) evals[k] = futures[k].get();
            } else {
                for (std::size_t k = 0; k < rewrites.size(); ++k) {
                    evals[k] = evaluate_candidate(backend, judge, rewrites[k], minibatch,
                                                  agent_base);
                }
            }

            int challenger = -1;
            for (std::size_t k = 0; k < rewrites.size(); ++k) {
                CandidatePrompt cand;
                cand.id = "cand-" + std::to_string(iter) + "-" + std::to_string(k);
                cand.text = rewrites[k];
                cand.parent = incumbent_id;
                cand.gradient_applied = gradient.text;
                cand.scores.emplace_back(iter, evals[k].mean);
                result.history.push_back(std::move(cand));
                if (challenger < 0 || evals[k].mean > evals[challenger].mean) {
                    challenger = static_cast<int>(k);
                }
            }

            // Greedy incumbent update; ties break toward the incumbent.
            if (challenger >= 0 && evals[challenger].mean > best_eval.mean) {
                best_index = result.history.size() - rewrites.size() + challenger;
                best_eval = evals[challenger];
                best_evaluated = true;
                result.incumbents.emplace_back(iter, result.history[best_index].id,
                                               best_eval.mean);
            }

            completed = iter;
            if (iter >= 2) {
                const double delta = best_eval.mean - prev_best_mean;
                plateau = delta <= cfg.plateau_epsilon ? plateau + 1 : 0;
            }
            prev_best_mean = best_eval.mean;
            if (plateau >= cfg.plateau_patience) {
                result.stop_reason = "plateau";
                break;
            }
        }
    } catch (const Error& e) {
        result.error = e.what();
        result.stop_reason = "error";
    }

    result.iterations = completed;
    result.best = result.history[best_index];
    return result;
}

json candidate_to_json(const CandidatePrompt& c) {
    json scores = json::array();
    for (const auto& [iteration, mean] : c.scores) {
        scores.push_back(json{{"iteration", iteration}, {"mean_score", mean}});
    }
    return json{{"id", c.id},
                {"text", c.text},
                {"parent", c.parent ? json(*c.parent) : json(nullptr)},
                {"gradient_applied", c.gradient_applied ? json(*c.gradient_applied) : json(nullptr)},
                {"scores", std::move(scores)}};
}

}  // namespace pgate
