#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clarify/backend.hpp"
#include "clarify/errors.hpp"
#include "clarify/rng.hpp"
#include "clarify/types.hpp"

namespace clarify {

// Deterministic stand-in for a live model, driven by a JSON script. Runs
// and tests use it to pin exact model behavior without network access.
//
// Script layout:
//   {
//     "id": "mock-model",
//     "supports_scoring": true,
//     "default_token_logprob": -0.25,
//     "rules": [
//       {
//         // matchers (all present ones must hold; none = match everything)
//         "contains": "substring of the flattened transcript" | ["...", ...],
//         "last_contains": "substring of the last message",
//         "last_role": "user",
//         "temperature": 0.5,
//
//         // single completion
//         "text": "the response",
//         "token_logprobs": [-0.1, -0.2],
//
//         // or a sampling pool; counts fix the draw frequencies exactly
//         "pool": [ {"text": "A", "count": 6}, {"text": "B", "count": 4} ],
//
//         // continuation scores, total or per token
//         "continuations": { " No": -0.105, "French: Oui.": [-0.2, -0.3] },
//
//         // failure injection
//         "fail_first": 2,
//         "fail_sample_indices": [3]
//       }
//     ]
//   }
//
// First matching rule wins. Greedy requests on a pool return the most
// frequent entry (ties: first listed). Sampling shuffles the expanded pool
// with the request seed and indexes it with sample_index, so n samples with
// counts summing to n reproduce the scripted frequencies exactly.
class ScriptedBackend final : public ChatBackend {
public:
    explicit ScriptedBackend(const nlohmann::json& script) {
        id_ = script.value("id", std::string("mock"));
        supports_scoring_ = script.value("supports_scoring", true);
        default_token_logprob_ = script.value("default_token_logprob", -0.25);
        require_logprob(default_token_logprob_, "default_token_logprob");
        if (!script.contains("rules") || !script["rules"].is_array()) {
            throw ConfigError("mock script needs a 'rules' array");
        }
        for (const auto& rj : script["rules"]) rules_.push_back(parse_rule(rj));
    }

    static ScriptedBackend from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open mock script '" + path + "'");
        nlohmann::json script;
        try {
            in >> script;
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("mock script '" + path + "' is not JSON: " + std::string(e.what()));
        }
        return ScriptedBackend(script);
    }

    std::string id() const override { return id_; }
    bool supports_scoring() const override { return supports_scoring_; }

    Completion complete(const CompletionRequest& request) override {
        std::lock_guard<std::mutex> lock(mutex_);
        ++complete_calls_;
        const std::string transcript = flatten_transcript(request.messages);
        for (auto& rule : rules_) {
            if (!rule.matches(transcript, request.messages, request.temperature)) continue;
            if (!rule.text && rule.pool.empty()) continue;  // scoring-only rule
            if (rule.fail_remaining > 0) {
                --rule.fail_remaining;
                throw TransportError("mock rule injected transient failure");
            }
            if (std::find(rule.fail_sample_indices.begin(), rule.fail_sample_indices.end(),
                          request.sample_index) != rule.fail_sample_indices.end()) {
                throw TransportError("mock rule injected failure for sample " +
                                     std::to_string(request.sample_index));
            }
            if (!rule.pool.empty()) return pick_from_pool(rule, request);
            return make_completion(*rule.text, rule.token_logprobs);
        }
        throw BackendError("no mock rule matches the request", 0, transcript);
    }

    double score(const std::vector<ChatMessage>& prefix, const std::string& continuation) override {
        std::lock_guard<std::mutex> lock(mutex_);
        ++score_calls_;
        if (!supports_scoring_) {
            throw UnsupportedCapabilityError("mock backend '" + id_ + "' has scoring disabled");
        }
        const std::string transcript = flatten_transcript(prefix);
        for (const auto& rule : rules_) {
            if (rule.continuations.empty()) continue;
            if (!rule.matches(transcript, prefix, 0.0)) continue;
            auto it = rule.continuations.find(continuation);
            if (it != rule.continuations.end()) return it->second;
        }
        return default_token_logprob_ * static_cast<double>(count_tokens(continuation));
    }

    int complete_calls() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return complete_calls_;
    }
    int score_calls() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return score_calls_;
    }

private:
    struct PoolEntry {
        std::string text;
        int count = 1;
        std::optional<std::vector<double>> token_logprobs;
    };

    struct Rule {
        std::vector<std::string> contains;
        std::optional<std::string> last_contains;
        std::optional<std::string> last_role;
        std::optional<double> temperature;

        std::optional<std::string> text;
        std::optional<std::vector<double>> token_logprobs;
        std::vector<PoolEntry> pool;
        std::map<std::string, double> continuations;

        int fail_remaining = 0;
        std::vector<int> fail_sample_indices;

        bool matches(const std::string& transcript, const std::vector<ChatMessage>& messages,
                     double request_temperature) const {
            for (const auto& needle : contains) {
                if (transcript.find(needle) == std::string::npos) return false;
            }
            if (last_contains || last_role) {
                if (messages.empty()) return false;
                const auto& last = messages.back();
                if (last_contains && last.content.find(*last_contains) == std::string::npos) {
                    return false;
                }
                if (last_role && *last_role != to_string(last.role)) return false;
            }
            if (temperature && std::abs(*temperature - request_temperature) > 1e-9) return false;
            return true;
        }
    };

    static void require_logprob(double value, const std::string& where) {
        if (value > 0.0) {
            throw ConfigError("mock script: " + where + " must be <= 0, got " +
                              std::to_string(value));
        }
    }

    static std::size_t count_tokens(const std::string& text) {
        std::istringstream in(text);
        std::string word;
        std::size_t n = 0;
        while (in >> word) ++n;
        return n;
    }

    Rule parse_rule(const nlohmann::json& rj) const {
        Rule rule;
        if (rj.contains("contains")) {
            if (rj["contains"].is_string()) {
                rule.contains.push_back(rj["contains"].get<std::string>());
            } else {
                rule.contains = rj["contains"].get<std::vector<std::string>>();
            }
        }
        if (rj.contains("last_contains")) rule.last_contains = rj["last_contains"].get<std::string>();
        if (rj.contains("last_role")) rule.last_role = rj["last_role"].get<std::string>();
        if (rj.contains("temperature")) rule.temperature = rj["temperature"].get<double>();
        if (rj.contains("text")) rule.text = rj["text"].get<std::string>();
        if (rj.contains("token_logprobs")) {
            rule.token_logprobs = rj["token_logprobs"].get<std::vector<double>>();
            for (double lp : *rule.token_logprobs) require_logprob(lp, "token_logprobs");
        }
        if (rj.contains("pool")) {
            for (const auto& ej : rj["pool"]) {
                PoolEntry entry;
                entry.text = ej.at("text").get<std::string>();
                entry.count = ej.value("count", 1);
                if (entry.count < 1) throw ConfigError("mock script: pool count must be >= 1");
                if (ej.contains("token_logprobs")) {
                    entry.token_logprobs = ej["token_logprobs"].get<std::vector<double>>();
                    for (double lp : *entry.token_logprobs) require_logprob(lp, "pool token_logprobs");
                }
                rule.pool.push_back(std::move(entry));
            }
            if (rule.pool.empty()) throw ConfigError("mock script: empty pool");
        }
        if (rule.text && !rule.pool.empty()) {
            throw ConfigError("mock script: rule has both text and pool");
        }
        if (rj.contains("continuations")) {
            for (const auto& [key, value] : rj["continuations"].items()) {
                double total = 0.0;
                if (value.is_array()) {
                    for (const auto& lp : value) total += lp.get<double>();
                } else {
                    total = value.get<double>();
                }
                require_logprob(total, "continuation score");
                rule.continuations[key] = total;
            }
        }
        rule.fail_remaining = rj.value("fail_first", 0);
        if (rj.contains("fail_sample_indices")) {
            rule.fail_sample_indices = rj["fail_sample_indices"].get<std::vector<int>>();
        }
        return rule;
    }

    Completion make_completion(const std::string& text,
                               const std::optional<std::vector<double>>& explicit_logprobs) const {
        Completion completion;
        completion.text = text;
        if (explicit_logprobs) {
            completion.token_logprobs = *explicit_logprobs;
        } else {
            completion.token_logprobs.assign(count_tokens(text), default_token_logprob_);
        }
        return completion;
    }

    Completion pick_from_pool(const Rule& rule, const CompletionRequest& request) const {
        if (request.temperature == 0.0) {
            const PoolEntry* best = &rule.pool.front();
            for (const auto& entry : rule.pool) {
                if (entry.count > best->count) best = &entry;
            }
            return make_completion(best->text, best->token_logprobs);
        }
        std::vector<const PoolEntry*> expansion;
        for (const auto& entry : rule.pool) {
            for (int i = 0; i < entry.count; ++i) expansion.push_back(&entry);
        }
        std::vector<std::size_t> order(expansion.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(mix_seed(request.seed, "mock-pool"));
        rng.shuffle(order);
        const auto& chosen =
            *expansion[order[static_cast<std::size_t>(request.sample_index) % order.size()]];
        return make_completion(chosen.text, chosen.token_logprobs);
    }

    std::string id_;
    bool supports_scoring_ = true;
    double default_token_logprob_ = -0.25;
    std::vector<Rule> rules_;
    mutable std::mutex mutex_;
    int complete_calls_ = 0;
    int score_calls_ = 0;
};

}  // namespace clarify
