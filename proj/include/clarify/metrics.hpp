#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clarify/errors.hpp"
#include "clarify/types.hpp"

namespace clarify {

// ---- answer normalization --------------------------------------------------

// Reading-comprehension answer normalization: lowercase, strip punctuation,
// drop the articles a/an/the as whole words, collapse whitespace.
// Idempotent: the output contains no punctuation and no standalone articles.
inline std::string normalize_answer(const std::string& text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (unsigned char c : text) {
        if (std::ispunct(c)) continue;
        lowered.push_back(static_cast<char>(std::tolower(c)));
    }
    std::string out;
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        if (word != "a" && word != "an" && word != "the") {
            if (!out.empty()) out.push_back(' ');
            out += word;
        }
        word.clear();
    };
    for (unsigned char c : lowered) {
        if (std::isspace(c)) {
            flush();
        } else {
            word.push_back(static_cast<char>(c));
        }
    }
    flush();
    return out;
}

// 1 iff any normalized gold answer is a substring of the normalized output.
inline int answer_recall(const std::string& output, const std::vector<std::string>& gold_answers) {
    const std::string norm_output = normalize_answer(output);
    for (const auto& gold : gold_answers) {
        if (norm_output.find(normalize_answer(gold)) != std::string::npos) return 1;
    }
    return 0;
}

inline int nli_item_score(EntailmentLabel predicted, EntailmentLabel gold) {
    return predicted == gold ? 1 : 0;
}

// Tie rule for contrastive MT accuracy: the intended translation must be
// strictly more likely than the alternative.
inline int contrastive_outcome(double logprob_intended, double logprob_alternative) {
    return logprob_intended > logprob_alternative ? 1 : 0;
}

// ---- summation -------------------------------------------------------------

// Neumaier compensated summation, so means do not drift with pool size.
class CompensatedSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double mean(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    CompensatedSum sum;
    for (double v : values) sum.add(v);
    return sum.value() / static_cast<double>(values.size());
}

// ---- AUROC -----------------------------------------------------------------

// Probability that a uniformly drawn positive outscores a uniformly drawn
// negative, ties credited 1/2. Computed with midranks:
//   AUROC = (R_pos - P(P+1)/2) / (P * N)
// which equals Mann-Whitney pair counting exactly.
inline double auroc(const std::vector<double>& scores, const std::vector<bool>& improved) {
    if (scores.size() != improved.size()) {
        throw Error("auroc: scores and labels differ in length");
    }
    std::size_t positives = 0;
    for (bool b : improved) positives += b ? 1 : 0;
    const std::size_t negatives = improved.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw DegenerateLabelsError("auroc: labels are all " +
                                    std::string(positives == 0 ? "negative" : "positive"));
    }

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        // midrank of the tie group [i, j), 1-based ranks
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (improved[order[k]]) rank_sum_pos += midrank;
        }
        i = j;
    }
    const double p = static_cast<double>(positives);
    const double n = static_cast<double>(negatives);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

// ---- interaction budgets ---------------------------------------------------

struct ScoredId {
    std::string id;
    double value;
};

struct ExampleOutcome {
    std::string example_id;
    double perf_direct = 0.0;     // in [0, 1]
    double perf_clarified = 0.0;  // in [0, 1]

    bool improved() const { return perf_clarified > perf_direct; }
};

enum class BudgetPool { ambiguous_only, full };

inline const char* to_string(BudgetPool pool) {
    return pool == BudgetPool::full ? "full" : "ambiguous_only";
}

inline BudgetPool budget_pool_from_string(const std::string& s) {
    if (s == "full") return BudgetPool::full;
    if (s == "ambiguous_only") return BudgetPool::ambiguous_only;
    throw ConfigError("unknown pool '" + s + "'");
}

// The floor(b*N/100) highest-scoring ids; ties broken by ascending id so
// selection is reproducible.
inline std::set<std::string> budget_select(std::vector<ScoredId> scores, double b) {
    if (b < 0.0 || b > 100.0) throw Error("budget_select: b out of [0, 100]");
    const std::size_t n = scores.size();
    const std::size_t take =
        static_cast<std::size_t>(std::floor(b * static_cast<double>(n) / 100.0));
    std::sort(scores.begin(), scores.end(), [](const ScoredId& a, const ScoredId& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.id < b.id;
    });
    std::set<std::string> selected;
    for (std::size_t i = 0; i < take && i < n; ++i) selected.insert(scores[i].id);
    return selected;
}

// Mean pool performance when the selected examples receive clarification and
// everything else is answered directly.
inline double budget_performance(const std::vector<ExampleOutcome>& outcomes,
                                 const std::set<std::string>& selected) {
    std::set<std::string> known;
    for (const auto& o : outcomes) known.insert(o.example_id);
    for (const auto& id : selected) {
        if (!known.count(id)) throw UnknownIdError("budget_performance: unknown id '" + id + "'");
    }
    if (outcomes.empty()) return 0.0;
    CompensatedSum sum;
    for (const auto& o : outcomes) {
        sum.add(selected.count(o.example_id) ? o.perf_clarified : o.perf_direct);
    }
    return sum.value() / static_cast<double>(outcomes.size());
}

// Percent of the total clarification benefit captured at this budget.
inline double relative_gain(double perf_b, double perf_0, double perf_100) {
    if (perf_100 == perf_0) {
        throw ZeroTotalGainError("relative_gain: clarifying all examples changes nothing");
    }
    return 100.0 * (perf_b - perf_0) / (perf_100 - perf_0);
}

// ---- budget reports --------------------------------------------------------

struct BudgetRow {
    double b = 0.0;
    double performance = 0.0;
    std::optional<double> relative_gain_percent;  // empty on zero total gain
};

struct BudgetReport {
    std::string method;
    std::optional<double> auroc;  // empty on degenerate labels
    std::vector<BudgetRow> rows;
};

// Full per-method evaluation: AUROC over improvement labels plus one row per
// requested budget. Scores must cover the outcome pool exactly once each.
inline BudgetReport evaluate_budgets(const std::string& method,
                                     const std::vector<ScoredId>& scores,
                                     const std::vector<ExampleOutcome>& outcomes,
                                     const std::vector<double>& budgets) {
    if (scores.size() != outcomes.size()) {
        throw Error("evaluate_budgets: scores do not cover the outcome pool");
    }
    std::vector<double> values(outcomes.size());
    std::vector<bool> labels(outcomes.size());
    {
        // align score order with outcomes by id
        std::vector<ScoredId> sorted = scores;
        std::sort(sorted.begin(), sorted.end(),
                  [](const ScoredId& a, const ScoredId& b) { return a.id < b.id; });
        std::vector<ExampleOutcome> out_sorted = outcomes;
        std::sort(out_sorted.begin(), out_sorted.end(),
                  [](const ExampleOutcome& a, const ExampleOutcome& b) {
                      return a.example_id < b.example_id;
                  });
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (sorted[i].id != out_sorted[i].example_id) {
                throw UnknownIdError("evaluate_budgets: score id '" + sorted[i].id +
                                     "' not in outcome pool");
            }
            values[i] = sorted[i].value;
            labels[i] = out_sorted[i].improved();
        }
    }

    BudgetReport report;
    report.method = method;
    try {
        report.auroc = auroc(values, labels);
    } catch (const DegenerateLabelsError&) {
        report.auroc = std::nullopt;
    }

    const double perf_0 = budget_performance(outcomes, {});
    std::set<std::string> all_ids;
    for (const auto& o : outcomes) all_ids.insert(o.example_id);
    const double perf_100 = budget_performance(outcomes, all_ids);

    for (double b : budgets) {
        BudgetRow row;
        row.b = b;
        row.performance = budget_performance(outcomes, budget_select(scores, b));
        try {
            row.relative_gain_percent = relative_gain(row.performance, perf_0, perf_100);
        } catch (const ZeroTotalGainError&) {
            row.relative_gain_percent = std::nullopt;
        }
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace clarify
