#include "pgate/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>

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

std::multiset<std::string> name_multiset(const std::vector<ToolCall>& calls) {
    std::multiset<std::string> names;
    for (const auto& c : calls) names.insert(c.name);
    return names;
}

// Type-strict canonical serialization (JSON values, so integer 5 and double
// 5.0 stay distinct), used for the exact-match multiset comparison.
std::string strict_canonical_form(const ToolCall& call) {
    json args = json::object();
    for (const auto& [key, value] : call.arguments) {
        args[key] = arg_to_json(canonical_arg(value));
    }
    return call.name + "|" + args.dump();
}

std::multiset<std::string> canonical_multiset(const std::vector<ToolCall>& calls) {
    std::multiset<std::string> forms;
    for (const auto& c : calls) forms.insert(strict_canonical_form(c));
    return forms;
}

// Partial agreement between two argument maps: both empty, or at least one
// identical (key, canonical value) pair.
bool args_agree_partially(const std::map<std::string, ArgValue>& a,
                          const std::map<std::string, ArgValue>& b) {
    if (a.empty() && b.empty()) return true;
    for (const auto& [key, value] : a) {
        auto it = b.find(key);
        if (it != b.end() && canonical_arg(value) == canonical_arg(it->second)) return true;
    }
    return false;
}

int first_score_token(const std::string& text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
        std::size_t end = i;
        while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
        // Skip digits glued to a word or a decimal point ("v2", "3.5").
        bool glued = (i > 0 && (std::isalnum(static_cast<unsigned char>(text[i - 1])) ||
                                text[i - 1] == '.' || text[i - 1] == '_')) ||
                     (end < text.size() && (std::isalpha(static_cast<unsigned char>(text[end])) ||
                                            text[end] == '.' || text[end] == '_'));
        if (!glued) {
            int value = std::stoi(text.substr(i, end - i));
            if (value >= 0 && value <= 10) return value;
        }
        i = end;
    }
    return -1;
}

}  // namespace

ArgValue canonical_arg(const ArgValue& value) {
    if (const auto* s = std::get_if<std::string>(&value)) return trim(*s);
    if (const auto* list = std::get_if<std::vector<std::string>>(&value)) {
        auto sorted = *list;
        for (auto& item : sorted) item = trim(item);
        std::sort(sorted.begin(), sorted.end());
        return sorted;
    }
    return value;
}

bool args_equal_canonical(const std::map<std::string, ArgValue>& a,
                          const std::map<std::string, ArgValue>& b) {
    if (a.size() != b.size()) return false;
    auto it_a = a.begin();
    auto it_b = b.begin();
    for (; it_a != a.end(); ++it_a, ++it_b) {
        if (it_a->first != it_b->first) return false;
        if (canonical_arg(it_a->second) != canonical_arg(it_b->second)) return false;
    }
    return true;
}

TurnScore score_turn(const std::vector<ToolCall>& predicted, const std::vector<ToolCall>& gold) {
    TurnScore score;
    const bool both_empty = predicted.empty() && gold.empty();

    score.fn_exact = both_empty || name_multiset(predicted) == name_multiset(gold);

    if (both_empty) {
        score.fn_partial = true;
    } else {
        auto gold_names = name_multiset(gold);
        for (const auto& p : predicted) {
            if (gold_names.count(p.name)) {
                score.fn_partial = true;
                break;
            }
        }
    }

    // A name-respecting bijection with equal canonical argument maps is the
    // same thing as equal multisets of canonical forms.
    score.arg_exact =
        score.fn_exact && (both_empty || canonical_multiset(predicted) == canonical_multiset(gold));

    if (both_empty) {
        score.arg_partial = true;
    } else {
        for (const auto& p : predicted) {
            for (const auto& g : gold) {
                if (p.name == g.name && args_agree_partially(p.arguments, g.arguments)) {
                    score.arg_partial = true;
                    break;
                }
            }
            if (score.arg_partial) break;
        }
    }
    return score;
}

std::vector<TurnScore> score_turn_per_call(const std::vector<ToolCall>& predicted,
                                           const std::vector<ToolCall>& gold) {
    if (predicted.empty() && gold.empty()) {
        return {TurnScore{true, true, true, true}};
    }
    std::vector<TurnScore> units;
    std::vector<bool> gold_used(gold.size(), false);
    for (const auto& p : predicted) {
        // Greedy: first unconsumed gold call with the same name.
        std::size_t match = gold.size();
        for (std::size_t g = 0; g < gold.size(); ++g) {
            if (!gold_used[g] && gold[g].name == p.name) {
                match = g;
                break;
            }
        }
        if (match == gold.size()) {
            units.push_back(TurnScore{});  // hallucinated call
            continue;
        }
        gold_used[match] = true;
        TurnScore unit;
        unit.fn_exact = true;
        unit.fn_partial = true;
        unit.arg_exact = args_equal_canonical(p.arguments, gold[match].arguments);
        unit.arg_partial = args_agree_partially(p.arguments, gold[match].arguments);
        units.push_back(unit);
    }
    for (std::size_t g = 0; g < gold.size(); ++g) {
        if (!gold_used[g]) units.push_back(TurnScore{});  // missed call
    }
    return units;
}

MetricReport aggregate(const std::vector<TurnScore>& scores) {
    if (scores.empty()) throw EmptyDataset("cannot aggregate zero turns");
    MetricReport report;
    report.n_turns = scores.size();
    report.per_turn = scores;
    std::size_t fn_e = 0, fn_p = 0, arg_e = 0, arg_p = 0;
    for (const auto& s : scores) {
        fn_e += s.fn_exact;
        fn_p += s.fn_partial;
        arg_e += s.arg_exact;
        arg_p += s.arg_partial;
    }
    const double n = static_cast<double>(scores.size());
    report.fn_exact_acc = fn_e / n;
    report.fn_partial_acc = fn_p / n;
    report.arg_exact_acc = arg_e / n;
    report.arg_partial_acc = arg_p / n;
    return report;
}

MetricReport evaluate(
    const std::vector<std::pair<std::vector<ToolCall>, std::vector<ToolCall>>>& turns,
    const EvalOptions& options) {
    std::vector<TurnScore> scores;
    for (const auto& [predicted, gold] : turns) {
        if (!options.include_empty_turns && predicted.empty() && gold.empty()) continue;
        if (options.granularity == MatchGranularity::Turn) {
            scores.push_back(score_turn(predicted, gold));
        } else {
            auto units = score_turn_per_call(predicted, gold);
            scores.insert(scores.end(), units.begin(), units.end());
        }
    }
    return aggregate(scores);
}

JudgeScore judge_response(Gateway& judge, const std::string& generated,
                          const std::string& gold) {
    if (generated.empty() || gold.empty()) {
        throw std::invalid_argument("judge_response requires non-empty generated and gold text");
    }
    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatRequest req;
        req.system = "You are a strict grader.";
        req.messages.push_back(
            {ChatMessage::Role::User, render_judge_prompt(generated, gold, attempt > 0)});
        ChatResponse resp = judge.complete(req);
        const std::string reply = resp.text.value_or("");
        int value = first_score_token(reply);
        if (value >= 0) return {value, trim(reply)};
    }
    return {0, "unparseable"};
}

json report_to_json(const MetricReport& report, MatchGranularity granularity) {
    json per_turn = json::array();
    for (const auto& s : report.per_turn) {
        per_turn.push_back(json{{"fn_exact", s.fn_exact},
                                {"fn_partial", s.fn_partial},
                                {"arg_exact", s.arg_exact},
                                {"arg_partial", s.arg_partial}});
    }
    return json{{"n_turns", report.n_turns},
                {"fn_exact_acc", report.fn_exact_acc},
                {"fn_partial_acc", report.fn_partial_acc},
                {"arg_exact_acc", report.arg_exact_acc},
                {"arg_partial_acc", report.arg_partial_acc},
                {"granularity", granularity == MatchGranularity::Turn ? "turn" : "call"},
                {"per_turn", std::move(per_turn)}};
}

std::string format_report_table(const MetricReport& report) {
    char line1[96];
    char line2[96];
    std::snprintf(line1, sizeof line1, "%-24s %-8.4f %-8.4f", "Function name accuracy",
                  report.fn_exact_acc, report.fn_partial_acc);
    std::snprintf(line2, sizeof line2, "%-24s %-8.4f %-8.4f", "Argument accuracy",
                  report.arg_exact_acc, report.arg_partial_acc);
    std::string out = "Metric                   Exact    Partial\n";
    out += line1;
    out += "\n";
    out += line2;
    out += "\n";
    return out;
}

}  // namespace pgate
