#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgate/episode.hpp"
#include "pgate/gateway.hpp"
#include "pgate/runtime.hpp"

namespace pgate {

// Natural-language feedback standing in for a numeric gradient.
struct GradientText {
    std::string text;  // non-empty
    std::vector<std::string> source_sample_ids;
};

struct CandidatePrompt {
    std::string id;
    std::string text;
    std::optional<std::string> parent;
    std::optional<std::string> gradient_applied;
    std::vector<std::pair<int, double>> scores;  // (iteration, mean judge score), append-only
};

struct LoopConfig {
    int budget = 10;
    int minibatch = 4;
    int success_threshold = 7;  // judge score >= threshold counts as a success
    int n_success_samples = 4;
    int n_failure_samples = 4;
    int n_rewrites = 2;
    int plateau_patience = 3;
    double plateau_epsilon = 0.0;
    unsigned seed = 0;
    int jobs = 1;  // concurrent candidate evaluation; keep 1 for index-scripted mocks
};

// One evaluated minibatch item, embedded into the gradient prompt.
struct ScoredSample {
    std::string id;
    std::string generated;
    std::string expected;
    int score = 0;
};

// Single rewrite with the fixed improve-instruction wrapper; the reply is
// the new prompt verbatim. Throws EmptyRewrite on an empty reply.
std::string rewrite_zero_shot(Gateway& backend, const std::string& prompt);

// One backend call over the gradient template embedding the given samples.
// Requires at least one sample across both lists.
GradientText generate_gradient(Gateway& backend, const std::string& prompt,
                               const std::vector<ScoredSample>& successes,
                               const std::vector<ScoredSample>& failures);

// n independent rewrite calls, each returning a full replacement prompt.
std::vector<std::string> apply_gradient(Gateway& backend, const std::string& prompt,
                                        const GradientText& gradient, int n);

struct OptimizeResult {
    CandidatePrompt best;
    std::vector<CandidatePrompt> history;
    // (iteration, candidate id, mean at acceptance) for the seed and every
    // later incumbent; the means are non-decreasing by construction.
    std::vector<std::tuple<int, std::string, double>> incumbents;
    int iterations = 0;
    std::string stop_reason;  // "budget" or "plateau"
    // Set when a gateway error aborted the loop; history holds the lineage
    // built before the failure.
    std::optional<std::string> error;
};

// The closed loop: evaluate → partition → gradient → rewrite → re-evaluate,
// greedy single incumbent, ties broken toward the incumbent. The minibatch
// is sampled once per run (seeded) and reused so comparisons stay paired;
// every accepted incumbent keeps its evaluation from the iteration that
// accepted it. Stops at the budget, or once the best mean has improved by
// <= plateau_epsilon for plateau_patience consecutive iterations.
OptimizeResult optimize(Gateway& backend, Gateway& judge, const std::string& seed_prompt,
                        const std::vector<EpisodeSpec>& dataset, const LoopConfig& cfg,
                        const AgentConfig& agent_base = {});

nlohmann::ordered_json candidate_to_json(const CandidatePrompt& c);

}  // namespace pgate
