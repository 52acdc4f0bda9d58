#include "pgate/enforcer.hpp"

#include <algorithm>
#include <set>

namespace pgate {

using json = nlohmann::ordered_json;

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

int effective_cap(const EnforcementPolicy& policy) {
    return std::max(1, std::min(policy.max_calls, policy.hard_cap));
}

}  // namespace

std::string to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::UndefinedFunction: return "UndefinedFunction";
        case RejectReason::UnknownParameter: return "UnknownParameter";
        case RejectReason::MissingRequired: return "MissingRequired";
        case RejectReason::TypeMismatch: return "TypeMismatch";
        case RejectReason::EnumViolation: return "EnumViolation";
        case RejectReason::OverCap: return "OverCap";
        case RejectReason::DuplicateCall: return "DuplicateCall";
    }
    return "UndefinedFunction";
}

Verdict Verdict::accepted(ToolCall call) {
    Verdict v;
    v.kind = Kind::Accepted;
    v.call = std::move(call);
    return v;
}

Verdict Verdict::repaired(ToolCall call, std::string note) {
    Verdict v;
    v.kind = Kind::Repaired;
    v.call = std::move(call);
    v.note = std::move(note);
    return v;
}

Verdict Verdict::rejected(ToolCall call, RejectReason reason, std::string detail) {
    Verdict v;
    v.kind = Kind::Rejected;
    v.call = std::move(call);
    v.reason = reason;
    v.detail = std::move(detail);
    return v;
}

int damerau_levenshtein(std::string_view a, std::string_view b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    if (n == 0) return static_cast<int>(m);
    if (m == 0) return static_cast<int>(n);

    std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
    for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
    for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);

    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            int cost = a[i - 1] == b[j - 1] ? 0 : 1;
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
            if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) {
                d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);  // transposition
            }
        }
    }
    return d[n][m];
}

Verdict validate_call(const ToolCall& call, const std::vector<ToolSpec>& tools,
                      const EnforcementPolicy& policy) {
    const ToolSpec* spec = nullptr;
    for (const auto& t : tools) {
        if (t.name == call.name) {
            spec = &t;
            break;
        }
    }
    if (!spec) {
        return Verdict::rejected(call, RejectReason::UndefinedFunction,
                                 "no tool named '" + call.name + "'");
    }

    std::set<std::string> taken;  // declared params already bound to an argument
    std::vector<std::string> unknown;
    for (const auto& [key, value] : call.arguments) {
        if (spec->find_param(key)) {
            taken.insert(key);
        } else {
            unknown.push_back(key);
        }
    }

    // Key repair: each unknown key must sit within the edit-distance
    // threshold of exactly one unused declared key. Ambiguous drift and keys
    // beyond the threshold reject as UnknownParameter.
    std::vector<std::pair<std::string, std::string>> renames;
    for (const auto& key : unknown) {
        if (!policy.allow_repair) {
            return Verdict::rejected(call, RejectReason::UnknownParameter,
                                     "unknown parameter '" + key + "'");
        }
        std::vector<std::string> candidates;
        for (const auto& p : spec->params) {
            if (taken.count(p.name)) continue;
            if (damerau_levenshtein(key, p.name) <= policy.max_key_edit_distance) {
                candidates.push_back(p.name);
            }
        }
        if (candidates.empty()) {
            return Verdict::rejected(call, RejectReason::UnknownParameter,
                                     "unknown parameter '" + key + "'");
        }
        if (candidates.size() > 1) {
            std::string detail = "ambiguous repair for '" + key + "': ";
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                if (i) detail += ", ";
                detail += candidates[i];
            }
            return Verdict::rejected(call, RejectReason::UnknownParameter, detail);
        }
        renames.emplace_back(key, candidates[0]);
        taken.insert(candidates[0]);
    }

    ToolCall fixed = call;
    for (const auto& [from, to] : renames) {
        auto node = fixed.arguments.extract(from);
        fixed.arguments[to] = std::move(node.mapped());
    }

    for (const auto& p : spec->params) {
        if (p.required && !fixed.arguments.count(p.name)) {
            return Verdict::rejected(call, RejectReason::MissingRequired,
                                     "missing required parameter '" + p.name + "'");
        }
    }

    for (const auto& [key, value] : fixed.arguments) {
        const ParamSpec* p = spec->find_param(key);
        if (!arg_matches_type(value, p->type)) {
            return Verdict::rejected(call, RejectReason::TypeMismatch,
                                     "parameter '" + key + "' expects " + to_string(p->type));
        }
    }

    for (const auto& [key, value] : fixed.arguments) {
        const ParamSpec* p = spec->find_param(key);
        if (!p->enum_values) continue;
        auto in_enum = [&](const std::string& v) {
            return std::find(p->enum_values->begin(), p->enum_values->end(), v) !=
                   p->enum_values->end();
        };
        bool ok = true;
        if (const auto* s = std::get_if<std::string>(&value)) {
            ok = in_enum(*s);
        } else if (const auto* list = std::get_if<std::vector<std::string>>(&value)) {
            for (const auto& v : *list) ok = ok && in_enum(v);
        }
        if (!ok) {
            return Verdict::rejected(call, RejectReason::EnumViolation,
                                     "parameter '" + key + "' is outside its enum");
        }
    }

    if (renames.empty()) return Verdict::accepted(std::move(fixed));
    std::string note;
    for (std::size_t i = 0; i < renames.size(); ++i) {
        if (i) note += ", ";
        note += renames[i].first + "→" + renames[i].second;
    }
    return Verdict::repaired(std::move(fixed), std::move(note));
}

TurnPlan enforce_turn(const std::vector<ToolCall>& calls, const std::vector<ToolSpec>& tools,
                      const EnforcementPolicy& policy) {
    TurnPlan plan;
    const int cap = effective_cap(policy);
    std::set<std::string> seen;  // canonical forms already in the plan
    bool clarify_reason = false;

    for (const auto& call : calls) {
        const std::string raw_key = canonical_form(call);
        if (seen.count(raw_key)) {
            plan.diagnostics.push_back(Verdict::rejected(
                call, RejectReason::DuplicateCall, "duplicate of an already accepted call"));
            continue;
        }
        if (static_cast<int>(plan.accepted.size()) >= cap) {
            plan.diagnostics.push_back(Verdict::rejected(
                call, RejectReason::OverCap,
                "call cap reached (max_calls=" + std::to_string(cap) + ")"));
            continue;
        }
        Verdict v = validate_call(call, tools, policy);
        if (v.accepted_or_repaired()) {
            plan.accepted.push_back(v.call);
            seen.insert(raw_key);
            seen.insert(canonical_form(v.call));
        } else if (v.reason == RejectReason::UndefinedFunction ||
                   v.reason == RejectReason::MissingRequired) {
            clarify_reason = true;
        }
        plan.diagnostics.push_back(std::move(v));
    }

    plan.clarification_needed = plan.accepted.empty() && clarify_reason;
    return plan;
}

bool check_action_first(const std::string& user_text,
                        const std::vector<std::string>& target_items, const TurnPlan& plan,
                        const EnforcementPolicy& policy) {
    if (!policy.action_first) return false;
    if (!plan.accepted.empty() || plan.clarification_needed) return false;
    const std::string haystack = lower(user_text);
    for (const auto& item : target_items) {
        if (item.empty()) continue;
        if (haystack.find(lower(item)) != std::string::npos) return true;
    }
    return false;
}

json verdict_to_json(const Verdict& v) {
    json out;
    switch (v.kind) {
        case Verdict::Kind::Accepted: out["kind"] = "accepted"; break;
        case Verdict::Kind::Repaired: out["kind"] = "repaired"; break;
        case Verdict::Kind::Rejected: out["kind"] = "rejected"; break;
    }
    out["call"] = call_to_json(v.call);
    if (v.kind == Verdict::Kind::Repaired) out["note"] = v.note;
    if (v.kind == Verdict::Kind::Rejected) {
        out["reason"] = to_string(v.reason);
        out["detail"] = v.detail;
    }
    return out;
}

json plan_to_json(const TurnPlan& plan) {
    json accepted = json::array();
    for (const auto& call : plan.accepted) accepted.push_back(call_to_json(call));
    json diagnostics = json::array();
    for (const auto& v : plan.diagnostics) diagnostics.push_back(verdict_to_json(v));
    return json{{"accepted", std::move(accepted)},
                {"clarification_needed", plan.clarification_needed},
                {"diagnostics", std::move(diagnostics)}};
}

}  // namespace pgate
