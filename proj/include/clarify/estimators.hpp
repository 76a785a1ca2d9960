#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clarify/equivalence.hpp"
#include "clarify/errors.hpp"
#include "clarify/gateway.hpp"
#include "clarify/prompting.hpp"
#include "clarify/rng.hpp"
#include "clarify/templates.hpp"

namespace clarify {

// ---- scores ----------------------------------------------------------------

inline constexpr const char* kMethodLikelihood = "likelihood";
inline constexpr const char* kMethodSelfAsk = "self_ask";
inline constexpr const char* kMethodSemanticEntropy = "semantic_entropy";
inline constexpr const char* kMethodIntentSim = "intent_sim";

inline const std::vector<std::string>& all_methods() {
    static const std::vector<std::string> methods = {kMethodLikelihood, kMethodSelfAsk,
                                                     kMethodSemanticEntropy, kMethodIntentSim};
    return methods;
}

// One uncertainty estimate u(x): larger means clarify sooner.
struct UncertaintyScore {
    std::string example_id;
    std::string method;
    double value = 0.0;
    nlohmann::json metadata = nlohmann::json::object();

    nlohmann::json to_json() const {
        return {{"example_id", example_id},
                {"method", method},
                {"value", value},
                {"metadata", metadata}};
    }

    static UncertaintyScore from_json(const nlohmann::json& j) {
        UncertaintyScore score;
        score.example_id = j.at("example_id").get<std::string>();
        score.method = j.at("method").get<std::string>();
        score.value = j.at("value").get<double>();
        score.metadata = j.value("metadata", nlohmann::json::object());
        if (!std::isfinite(score.value)) {
            throw SchemaError("non-finite uncertainty value for '" + score.example_id + "'");
        }
        return score;
    }
};

inline void save_scores(const std::string& path, const std::vector<UncertaintyScore>& scores) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write scores file '" + path + "'");
    for (const auto& score : scores) out << score.to_json().dump() << '\n';
}

inline std::vector<UncertaintyScore> load_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open scores file '" + path + "'");
    std::vector<UncertaintyScore> scores;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            scores.push_back(UncertaintyScore::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("invalid score record: ") + e.what(), line_no);
        }
    }
    return scores;
}

// ---- configuration ---------------------------------------------------------

struct EstimatorConfig {
    int samples = 10;          // S sampled outputs / simulated responses
    double temperature = 0.5;  // T for those samples
    std::uint64_t seed = 0;
    int max_tokens = 256;
    // Self-Ask on backends without forced scoring: estimate P(" No") by
    // frequency over this many temperature-1 samples.
    int selfask_fallback_samples = 20;
    bool allow_selfask_fallback = true;

    void validate() const {
        if (samples < 2) throw ConfigError("estimator sample count must be >= 2");
        if (temperature <= 0.0) throw ConfigError("estimator temperature must be > 0");
        if (max_tokens < 1) throw ConfigError("estimator max_tokens must be >= 1");
    }

    std::uint64_t example_seed(const std::string& example_id) const {
        return mix_seed(seed, example_id);
    }
};

// The template set plus the per-variant exemplar draws shared by a run.
struct PromptingPlan {
    const TemplateSet* templates = nullptr;
    TaskKind task = TaskKind::qa;
    std::vector<Exemplar> direct;    // Direct prompts (likelihood, semantic entropy)
    std::vector<Exemplar> selfask;   // Self-Ask prompts, 50-50 ambiguous mix
    std::vector<Exemplar> followup;  // Follow and intent-simulation prompts

    const TemplateSet& templates_ref() const {
        if (!templates) throw ConfigError("prompting plan has no template set");
        return *templates;
    }
};

namespace detail {

// The live example must never appear among its own exemplars.
inline std::vector<Exemplar> without_example(const std::vector<Exemplar>& exemplars,
                                             const std::string& id) {
    std::vector<Exemplar> out;
    out.reserve(exemplars.size());
    for (const auto& e : exemplars) {
        if (e.id != id) out.push_back(e);
    }
    return out;
}

inline std::string casefold(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(static_cast<char>(std::tolower(c)));
    return out;
}

// "No" followed by a word boundary, after leading whitespace.
inline bool completion_says_no(const std::string& text) {
    const std::string trimmed = trim_copy(text);
    if (trimmed.rfind("No", 0) != 0) return false;
    return trimmed.size() == 2 || std::isalpha(static_cast<unsigned char>(trimmed[2])) == 0;
}

}  // namespace detail

// Draws the three exemplar lists from one pool: plain draws for Direct, a
// 50-50 ambiguous mix for Self-Ask, and ambiguous-only exchange-bearing
// draws for Follow and intent simulation.
inline PromptingPlan make_prompting_plan(const TemplateSet& templates, TaskKind task,
                                         const ExemplarPool& pool, int exemplar_count,
                                         std::uint64_t seed) {
    PromptingPlan plan;
    plan.templates = &templates;
    plan.task = task;
    plan.direct = sample_exemplars(pool, exemplar_count, mix_seed(seed, "plan-direct"));
    plan.selfask =
        sample_exemplars(pool, exemplar_count, mix_seed(seed, "plan-selfask"), /*mix_5050=*/true);
    plan.followup =
        sample_exemplars(pool.ambiguous_only(), exemplar_count, mix_seed(seed, "plan-follow"));
    return plan;
}

// ---- likelihood ------------------------------------------------------------

// u = length-normalized negative log-likelihood of the greedy Direct output.
// The raw sum stays in metadata so the normalization is reversible.
inline UncertaintyScore likelihood_score(ChatGateway& gateway, const PromptingPlan& plan,
                                         const AmbiguousExample& example,
                                         const EstimatorConfig& config = {}) {
    config.validate();
    const auto messages =
        build_prompt(plan.templates_ref(), PromptVariant::direct, plan.task,
                     detail::without_example(plan.direct, example.id), example);
    const auto completion = gateway.greedy_complete(messages, config.max_tokens);
    if (completion.token_logprobs.empty()) {
        throw EmptyCompletionError("no token logprobs for likelihood on '" + example.id + "'");
    }
    const double sum = completion.sum_logprob();
    const auto count = static_cast<double>(completion.token_logprobs.size());

    UncertaintyScore score;
    score.example_id = example.id;
    score.method = kMethodLikelihood;
    score.value = -sum / count;
    score.metadata["completion"] = completion.text;
    score.metadata["token_logprobs"] = completion.token_logprobs;
    score.metadata["sum_logprob"] = sum;
    score.metadata["num_tokens"] = completion.token_logprobs.size();
    return score;
}

// ---- self-ask --------------------------------------------------------------

// u = 1 - P(" No") after "Is a Follow-Up Question Needed Here?". Forced
// scoring when the backend supports it, frequency over sampled next turns
// otherwise; metadata records which path produced the estimate.
inline UncertaintyScore self_ask_score(ChatGateway& gateway, const PromptingPlan& plan,
                                       const AmbiguousExample& example,
                                       const EstimatorConfig& config = {}) {
    config.validate();
    const auto& templates = plan.templates_ref();
    const auto messages = build_prompt(templates, PromptVariant::selfask, plan.task,
                                       detail::without_example(plan.selfask, example.id), example);
    const std::string& no_token = templates.get(plan.task, PromptVariant::selfask).text("no_token");

    UncertaintyScore score;
    score.example_id = example.id;
    score.method = kMethodSelfAsk;
    double p_no = 0.0;
    if (gateway.supports_scoring()) {
        const double logprob = gateway.score_continuation(messages, no_token);
        p_no = std::min(1.0, std::exp(logprob));
        score.metadata["source"] = "forced_scoring";
        score.metadata["logprob_no"] = logprob;
    } else if (config.allow_selfask_fallback) {
        const int n = std::max(1, config.selfask_fallback_samples);
        const auto seed = mix_seed(config.example_seed(example.id), "selfask-fallback");
        const auto completions =
            gateway.sample_completions(messages, n, 1.0, seed, config.max_tokens);
        int no_count = 0;
        for (const auto& completion : completions) {
            if (detail::completion_says_no(completion.text)) ++no_count;
        }
        p_no = static_cast<double>(no_count) / static_cast<double>(n);
        score.metadata["source"] = "sampling";
        score.metadata["fallback_samples"] = n;
        score.metadata["no_count"] = no_count;
    } else {
        throw UnsupportedCapabilityError(
            "backend cannot score continuations and the Self-Ask sampling fallback is disabled");
    }
    score.value = 1.0 - p_no;
    score.metadata["p_no"] = p_no;
    return score;
}

// ---- semantic entropy ------------------------------------------------------

namespace detail {

// Equivalence keys for the exact-match tasks: NLI completions reduce to
// their verdict, MT translations compare after trim + casefold.
struct ParsedSample {
    std::string raw;
    std::string text;  // parsed payload (valid when parsed)
    std::string exact_key;
    bool parsed = false;
};

inline std::vector<ParsedSample> parse_direct_samples(const TemplateSet& templates, TaskKind task,
                                                      const std::vector<Completion>& completions) {
    std::vector<ParsedSample> samples;
    samples.reserve(completions.size());
    for (const auto& completion : completions) {
        ParsedSample sample;
        sample.raw = completion.text;
        try {
            const auto parsed =
                parse_structured_output(templates, PromptVariant::direct, task, completion.text);
            sample.parsed = true;
            sample.text = parsed.text;
            if (task == TaskKind::nli) {
                sample.exact_key = to_string(*parsed.label);
            } else {
                sample.exact_key = casefold(trim_copy(parsed.text));
            }
        } catch (const UnparseableOutputError&) {
            sample.parsed = false;
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace detail

// u = entropy over equivalence clusters of S sampled Direct outputs. QA
// clusters by either-direction entailment of question + answer pairs; MT and
// NLI cluster by exact match. Unparseable samples form singleton clusters.
inline UncertaintyScore semantic_entropy_score(ChatGateway& gateway, EntailmentJudge& judge,
                                               const PromptingPlan& plan,
                                               const AmbiguousExample& example,
                                               const EstimatorConfig& config = {}) {
    config.validate();
    const auto& templates = plan.templates_ref();
    const auto messages = build_prompt(templates, PromptVariant::direct, plan.task,
                                       detail::without_example(plan.direct, example.id), example);
    const auto seed = mix_seed(config.example_seed(example.id), "semantic-entropy");
    const auto completions = gateway.sample_completions(messages, config.samples,
                                                        config.temperature, seed,
                                                        config.max_tokens);
    const auto samples = detail::parse_direct_samples(templates, plan.task, completions);

    const auto graph =
        build_equivalence_graph(static_cast<int>(samples.size()), [&](int i, int j) {
            const auto& a = samples[static_cast<std::size_t>(i)];
            const auto& b = samples[static_cast<std::size_t>(j)];
            if (!a.parsed || !b.parsed) return false;
            if (plan.task == TaskKind::qa) {
                return responses_equivalent(judge, example.input, a.text, b.text);
            }
            return a.exact_key == b.exact_key;
        });
    const auto distribution = cluster_distribution(graph);

    UncertaintyScore score;
    score.example_id = example.id;
    score.method = kMethodSemanticEntropy;
    score.value = distribution.entropy_nats();
    nlohmann::json sample_texts = nlohmann::json::array();
    int unparsed = 0;
    for (const auto& sample : samples) {
        sample_texts.push_back(sample.raw);
        if (!sample.parsed) ++unparsed;
    }
    score.metadata["samples"] = sample_texts;
    score.metadata["num_samples"] = samples.size();
    score.metadata["unparsed_samples"] = unparsed;
    score.metadata["cluster_sizes"] = distribution.cluster_sizes();
    score.metadata["entropy_base"] = "nats";
    return score;
}

// ---- intent simulation -----------------------------------------------------

// u = entropy over clusters of simulated user intents: greedily generate a
// clarifying question for x, sample S user responses to it, and cluster the
// responses by either-direction entailment in the context of the question.
// If the greedy question cannot be parsed, the score degrades to semantic
// entropy with a metadata flag so every example still receives a value.
inline UncertaintyScore intent_sim_score(ChatGateway& gateway, EntailmentJudge& judge,
                                         const PromptingPlan& plan,
                                         const AmbiguousExample& example,
                                         const EstimatorConfig& config = {}) {
    config.validate();
    const auto& templates = plan.templates_ref();
    const auto exemplars = detail::without_example(plan.followup, example.id);

    const auto question_prompt =
        build_prompt(templates, PromptVariant::intentsim_question, plan.task, exemplars, example);
    const auto question_completion = gateway.greedy_complete(question_prompt, config.max_tokens);
    std::string question;
    try {
        question = parse_structured_output(templates, PromptVariant::intentsim_question, plan.task,
                                           question_completion.text)
                       .text;
    } catch (const UnparseableOutputError&) {
        auto score = semantic_entropy_score(gateway, judge, plan, example, config);
        score.method = kMethodIntentSim;
        score.metadata["fallback"] = "semantic_entropy";
        score.metadata["unparsed_question"] = question_completion.text;
        return score;
    }

    PromptExtras extras;
    extras.clarifying_question = question;
    const auto answer_prompt = build_prompt(templates, PromptVariant::intentsim_answer, plan.task,
                                            exemplars, example, extras);
    const auto seed = mix_seed(config.example_seed(example.id), "intent-sim");
    const auto completions = gateway.sample_completions(answer_prompt, config.samples,
                                                        config.temperature, seed,
                                                        config.max_tokens);

    std::vector<std::string> answers;
    answers.reserve(completions.size());
    int unparsed = 0;
    for (const auto& completion : completions) {
        try {
            answers.push_back(parse_structured_output(templates, PromptVariant::intentsim_answer,
                                                      plan.task, completion.text)
                                  .text);
        } catch (const UnparseableOutputError&) {
            // a free-form reply is still a simulated intent; keep it verbatim
            answers.push_back(trim_copy(completion.text));
            ++unparsed;
        }
    }

    const auto graph = build_equivalence_graph(judge, question, answers);
    const auto distribution = cluster_distribution(graph);

    UncertaintyScore score;
    score.example_id = example.id;
    score.method = kMethodIntentSim;
    score.value = distribution.entropy_nats();
    score.metadata["question"] = question;
    score.metadata["samples"] = answers;
    score.metadata["num_samples"] = answers.size();
    score.metadata["unparsed_answers"] = unparsed;
    score.metadata["cluster_sizes"] = distribution.cluster_sizes();
    score.metadata["entropy_base"] = "nats";
    return score;
}

// ---- dispatch --------------------------------------------------------------

inline UncertaintyScore score_example(const std::string& method, ChatGateway& gateway,
                                      EntailmentJudge& judge, const PromptingPlan& plan,
                                      const AmbiguousExample& example,
                                      const EstimatorConfig& config) {
    if (method == kMethodLikelihood) return likelihood_score(gateway, plan, example, config);
    if (method == kMethodSelfAsk) return self_ask_score(gateway, plan, example, config);
    if (method == kMethodSemanticEntropy) {
        return semantic_entropy_score(gateway, judge, plan, example, config);
    }
    if (method == kMethodIntentSim) return intent_sim_score(gateway, judge, plan, example, config);
    throw ConfigError("unknown estimator '" + method + "'");
}

}  // namespace clarify
