#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clarify/errors.hpp"
#include "clarify/types.hpp"

namespace clarify {

// ---- entailment judges -----------------------------------------------------

class EntailmentJudge {
public:
    virtual ~EntailmentJudge() = default;
    virtual std::string id() const = 0;
    virtual EntailmentLabel judge(const std::string& premise, const std::string& hypothesis) = 0;
};

// Test judge: identical strings entail, everything else is neutral.
class ExactMatchJudge final : public EntailmentJudge {
public:
    std::string id() const override { return "exact-match"; }
    EntailmentLabel judge(const std::string& premise, const std::string& hypothesis) override {
        return premise == hypothesis ? EntailmentLabel::entailment : EntailmentLabel::neutral;
    }
};

// Deterministic judge driven by a table of ordered (premise, hypothesis)
// verdicts. Script format:
//   { "reflexive": true, "default": "neutral",
//     "pairs": [ {"premise": ..., "hypothesis": ..., "label": "entailment",
//                 "symmetric": false} ] }
class ScriptedJudge final : public EntailmentJudge {
public:
    explicit ScriptedJudge(const nlohmann::json& script) {
        reflexive_ = script.value("reflexive", true);
        default_ = entailment_label_from_string(script.value("default", std::string("neutral")));
        for (const auto& pair : script.value("pairs", nlohmann::json::array())) {
            const auto premise = pair.at("premise").get<std::string>();
            const auto hypothesis = pair.at("hypothesis").get<std::string>();
            const auto label = entailment_label_from_string(pair.at("label").get<std::string>());
            table_[{premise, hypothesis}] = label;
            if (pair.value("symmetric", false)) table_[{hypothesis, premise}] = label;
        }
    }

    std::string id() const override { return "scripted"; }

    EntailmentLabel judge(const std::string& premise, const std::string& hypothesis) override {
        auto it = table_.find({premise, hypothesis});
        if (it != table_.end()) return it->second;
        if (reflexive_ && premise == hypothesis) return EntailmentLabel::entailment;
        return default_;
    }

private:
    std::map<std::pair<std::string, std::string>, EntailmentLabel> table_;
    bool reflexive_ = true;
    EntailmentLabel default_ = EntailmentLabel::neutral;
};

// ---- equivalence rule ------------------------------------------------------

// Joins a clarifying question with one answer into the single sequence the
// judge sees: question, one space, answer.
inline std::string join_qa(const std::string& question, const std::string& answer) {
    if (question.empty()) return answer;
    if (answer.empty()) return question;
    return question + " " + answer;
}

// Either-direction entailment of the two clarifying QA pairs. The right
// direction is only queried when the left one does not already entail.
inline bool responses_equivalent(EntailmentJudge& judge, const std::string& question,
                                 const std::string& answer_i, const std::string& answer_j) {
    const std::string left = join_qa(question, answer_i);
    const std::string right = join_qa(question, answer_j);
    if (judge.judge(left, right) == EntailmentLabel::entailment) return true;
    return judge.judge(right, left) == EntailmentLabel::entailment;
}

// ---- equivalence graph -----------------------------------------------------

struct EquivalenceGraph {
    int node_count = 0;
    std::vector<std::pair<int, int>> edges;  // undirected, stored with first < second
};

// Builds the graph from an arbitrary pairwise predicate; evaluates each of
// the node_count*(node_count-1)/2 unordered pairs exactly once.
inline EquivalenceGraph build_equivalence_graph(
    int node_count, const std::function<bool(int, int)>& equivalent) {
    EquivalenceGraph graph;
    graph.node_count = node_count;
    for (int i = 0; i < node_count; ++i) {
        for (int j = i + 1; j < node_count; ++j) {
            if (equivalent(i, j)) graph.edges.emplace_back(i, j);
        }
    }
    return graph;
}

inline EquivalenceGraph build_equivalence_graph(EntailmentJudge& judge,
                                                const std::string& question,
                                                const std::vector<std::string>& answers) {
    return build_equivalence_graph(static_cast<int>(answers.size()), [&](int i, int j) {
        return responses_equivalent(judge, question, answers[i], answers[j]);
    });
}

// Maximal connected components via depth-first search. Node order within a
// component is ascending; components are ordered by their smallest member.
inline std::vector<std::vector<int>> connected_components(const EquivalenceGraph& graph) {
    std::vector<std::vector<int>> adjacency(graph.node_count);
    for (const auto& [a, b] : graph.edges) {
        adjacency[a].push_back(b);
        adjacency[b].push_back(a);
    }
    std::vector<bool> visited(graph.node_count, false);
    std::vector<std::vector<int>> components;
    for (int start = 0; start < graph.node_count; ++start) {
        if (visited[start]) continue;
        std::vector<int> component;
        std::vector<int> stack{start};
        visited[start] = true;
        while (!stack.empty()) {
            int node = stack.back();
            stack.pop_back();
            component.push_back(node);
            for (int next : adjacency[node]) {
                if (!visited[next]) {
                    visited[next] = true;
                    stack.push_back(next);
                }
            }
        }
        std::sort(component.begin(), component.end());
        components.push_back(std::move(component));
    }
    return components;
}

// ---- cluster distribution --------------------------------------------------

struct ClusterDistribution {
    std::vector<std::vector<int>> clusters;
    int total = 0;  // number of clustered samples, S

    std::vector<double> probabilities() const {
        std::vector<double> probs;
        probs.reserve(clusters.size());
        for (const auto& c : clusters) {
            probs.push_back(static_cast<double>(c.size()) / static_cast<double>(total));
        }
        return probs;
    }

    std::vector<std::size_t> cluster_sizes() const {
        std::vector<std::size_t> sizes;
        sizes.reserve(clusters.size());
        for (const auto& c : clusters) sizes.push_back(c.size());
        return sizes;
    }

    // Entropy in nats straight from cluster counts:
    //   H = ln S - (1/S) * sum_c |c| ln |c|
    // avoiding any intermediate normalization error.
    double entropy_nats() const {
        if (total <= 0) throw InvalidDistributionError("entropy over empty cluster set");
        double weighted = 0.0;
        for (const auto& c : clusters) {
            const double n = static_cast<double>(c.size());
            if (n > 0.0) weighted += n * std::log(n);
        }
        return std::log(static_cast<double>(total)) - weighted / static_cast<double>(total);
    }
};

inline ClusterDistribution cluster_distribution(const EquivalenceGraph& graph) {
    ClusterDistribution dist;
    dist.clusters = connected_components(graph);
    dist.total = graph.node_count;
    int covered = 0;
    for (const auto& c : dist.clusters) covered += static_cast<int>(c.size());
    if (covered != graph.node_count) {
        throw InvalidDistributionError("clusters do not partition the nodes");
    }
    return dist;
}

// ---- entropy ---------------------------------------------------------------

// -sum p ln p in nats, with 0 ln 0 := 0. Probabilities must be non-negative
// and sum to 1 within 1e-9.
inline double entropy_nats(const std::vector<double>& probabilities) {
    double sum = 0.0;
    for (double p : probabilities) {
        if (p < 0.0) throw InvalidDistributionError("negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw InvalidDistributionError("probabilities sum to " + std::to_string(sum));
    }
    double h = 0.0;
    for (double p : probabilities) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

}  // namespace clarify
