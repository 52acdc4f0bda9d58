#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgate/episode.hpp"
#include "pgate/gateway.hpp"

namespace pgate {

struct TurnScore {
    bool fn_exact = false;
    bool fn_partial = false;
    bool arg_exact = false;
    bool arg_partial = false;

    bool operator==(const TurnScore&) const = default;
};

struct MetricReport {
    std::size_t n_turns = 0;
    double fn_exact_acc = 0.0;
    double fn_partial_acc = 0.0;
    double arg_exact_acc = 0.0;
    double arg_partial_acc = 0.0;
    std::vector<TurnScore> per_turn;
};

// Turn-level scoring. Exact requires the full multiset of names (and, for
// arg_exact, a name-respecting bijection with equal canonicalized argument
// maps); partial requires at least one match. A turn where both sides are
// empty counts as correct on every flag.
TurnScore score_turn(const std::vector<ToolCall>& predicted,
                     const std::vector<ToolCall>& gold);

// Call-level micro alternative (one score unit per call, greedy name
// pairing, unmatched calls count as all-false units).
std::vector<TurnScore> score_turn_per_call(const std::vector<ToolCall>& predicted,
                                           const std::vector<ToolCall>& gold);

// Plain means over the scores; throws EmptyDataset on an empty list.
MetricReport aggregate(const std::vector<TurnScore>& scores);

enum class MatchGranularity { Turn, Call };

struct EvalOptions {
    MatchGranularity granularity = MatchGranularity::Turn;
    // When false, turns where prediction and gold are both empty are
    // excluded from aggregation.
    bool include_empty_turns = true;
};

MetricReport evaluate(
    const std::vector<std::pair<std::vector<ToolCall>, std::vector<ToolCall>>>& turns,
    const EvalOptions& options = {});

// Canonicalization used by the scorer: strings trimmed, values
// case-sensitive, list arguments compared as multisets.
ArgValue canonical_arg(const ArgValue& value);
bool args_equal_canonical(const std::map<std::string, ArgValue>& a,
                          const std::map<std::string, ArgValue>& b);

struct JudgeScore {
    int value = 0;  // 0..10
    std::string rationale;
};

// Sends the fixed judge prompt and parses the first in-range integer token;
// retries once with a stricter instruction, then falls back to 0 with
// rationale "unparseable".
JudgeScore judge_response(Gateway& judge, const std::string& generated,
                          const std::string& gold);

nlohmann::ordered_json report_to_json(const MetricReport& report, MatchGranularity granularity);
// Two-column table in the style of a Metric / Exact / Partial summary.
std::string format_report_table(const MetricReport& report);

}  // namespace pgate
