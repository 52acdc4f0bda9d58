#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgate/episode.hpp"

namespace pgate {

struct EnforcementPolicy {
    int max_calls = 1;               // single-shot by default
    int hard_cap = 4;
    bool allow_repair = true;
    int max_key_edit_distance = 2;   // Damerau-Levenshtein
    bool action_first = true;
};

enum class RejectReason {
    UndefinedFunction,
    UnknownParameter,
    MissingRequired,
    TypeMismatch,
    EnumViolation,
    OverCap,
    // Dropped duplicate inside enforce_turn; never produced by validate_call.
    DuplicateCall,
};

std::string to_string(RejectReason reason);

struct Verdict {
    enum class Kind { Accepted, Repaired, Rejected };

    Kind kind = Kind::Accepted;
    ToolCall call;  // accepted/repaired: the call as it will execute; rejected: as proposed
    std::string note;                                  // repaired: "old→new" renames
    RejectReason reason = RejectReason::UndefinedFunction;  // rejected only
    std::string detail;

    bool accepted_or_repaired() const { return kind != Kind::Rejected; }

    static Verdict accepted(ToolCall call);
    static Verdict repaired(ToolCall call, std::string note);
    static Verdict rejected(ToolCall call, RejectReason reason, std::string detail);
};

struct TurnPlan {
    std::vector<ToolCall> accepted;  // |accepted| <= policy.max_calls
    bool clarification_needed = false;
    std::vector<Verdict> diagnostics;  // one per proposed call, in order
};

// Optimal-string-alignment Damerau-Levenshtein distance.
int damerau_levenshtein(std::string_view a, std::string_view b);

// Checks one call against the declared tools. All failures are verdicts,
// never exceptions. Repair renames unknown argument keys when exactly one
// unused declared key lies within the edit-distance threshold; ambiguous
// drift is rejected as UnknownParameter. Rejection reasons follow the fixed
// priority order of RejectReason.
Verdict validate_call(const ToolCall& call, const std::vector<ToolSpec>& tools,
                      const EnforcementPolicy& policy);

// Validates in order, drops duplicate calls, caps accepted calls at
// max_calls, and raises clarification_needed when every call was rejected
// and at least one rejection was UndefinedFunction or MissingRequired.
TurnPlan enforce_turn(const std::vector<ToolCall>& calls, const std::vector<ToolSpec>& tools,
                      const EnforcementPolicy& policy);

// True = the action-first rule was violated: a target item is mentioned in
// the user text but the plan neither calls a tool nor asks for clarification.
bool check_action_first(const std::string& user_text,
                        const std::vector<std::string>& target_items, const TurnPlan& plan,
                        const EnforcementPolicy& policy);

nlohmann::ordered_json verdict_to_json(const Verdict& v);
nlohmann::ordered_json plan_to_json(const TurnPlan& plan);

}  // namespace pgate
