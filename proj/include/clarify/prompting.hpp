#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clarify/corpus.hpp"
#include "clarify/errors.hpp"
#include "clarify/gateway.hpp"
#include "clarify/rng.hpp"
#include "clarify/templates.hpp"
#include "clarify/types.hpp"

namespace clarify {

// ---- task-facing text conventions ------------------------------------------

// The NLI answer vocabulary: True entails, False contradicts, Inconclusive
// is neutral.
inline const char* nli_label_word(EntailmentLabel label) {
    switch (label) {
        case EntailmentLabel::entailment: return "True";
        case EntailmentLabel::contradiction: return "False";
        case EntailmentLabel::neutral: return "Inconclusive";
    }
    return "?";
}

inline std::string trim_copy(const std::string& text) {
    const auto begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = text.find_last_not_of(" \t\r\n");
    return text.substr(begin, end - begin + 1);
}

// NLI inputs travel as one string: premise, newline, claim.
inline std::pair<std::string, std::string> split_nli_input(const std::string& input) {
    const auto pos = input.find('\n');
    if (pos == std::string::npos) {
        throw SchemaError("NLI input must be 'premise\\nclaim', got '" + input + "'");
    }
    return {input.substr(0, pos), input.substr(pos + 1)};
}

// First word-boundary occurrence of True/False/Inconclusive, case-insensitive.
inline EntailmentLabel nli_label_from_text(const std::string& text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (unsigned char c : text) lowered.push_back(static_cast<char>(std::tolower(c)));
    auto is_word_char = [](unsigned char c) { return std::isalpha(c) != 0; };
    struct Token {
        const char* word;
        EntailmentLabel label;
    };
    static const Token tokens[] = {{"true", EntailmentLabel::entailment},
                                   {"false", EntailmentLabel::contradiction},
                                   {"inconclusive", EntailmentLabel::neutral}};
    std::size_t best_pos = std::string::npos;
    EntailmentLabel best_label = EntailmentLabel::neutral;
    for (const auto& token : tokens) {
        const std::string word = token.word;
        std::size_t from = 0;
        while (true) {
            const auto pos = lowered.find(word, from);
            if (pos == std::string::npos) break;
            const bool left_ok = pos == 0 || !is_word_char(static_cast<unsigned char>(lowered[pos - 1]));
            const auto after = pos + word.size();
            const bool right_ok =
                after >= lowered.size() || !is_word_char(static_cast<unsigned char>(lowered[after]));
            if (left_ok && right_ok) {
                if (pos < best_pos) {
                    best_pos = pos;
                    best_label = token.label;
                }
                break;
            }
            from = pos + 1;
        }
    }
    if (best_pos == std::string::npos) {
        throw UnparseableOutputError("no True/False/Inconclusive verdict in output", text);
    }
    return best_label;
}

// ---- exemplars -------------------------------------------------------------

// A fully worked example for few-shot prompts: the input, the final answer
// text, and (for ambiguous exemplars) its clarifying exchange.
struct Exemplar {
    std::string id;
    std::string input;
    std::string answer;  // QA answer string, NLI answer word, or MT translation
    bool ambiguous = false;
    std::string question;  // clarifying question (ambiguous exemplars)
    std::string response;  // clarifying answer for the demonstrated intent
    std::string context;   // MT: context sentence of the demonstrated intent
};

struct ExemplarPool {
    TaskKind task = TaskKind::qa;
    std::vector<Exemplar> exemplars;

    std::size_t count_ambiguous() const {
        return static_cast<std::size_t>(
            std::count_if(exemplars.begin(), exemplars.end(),
                          [](const Exemplar& e) { return e.ambiguous; }));
    }

    ExemplarPool ambiguous_only() const {
        ExemplarPool out;
        out.task = task;
        for (const auto& e : exemplars) {
            if (e.ambiguous) out.exemplars.push_back(e);
        }
        return out;
    }
};

inline std::string rendered_answer(TaskKind task, const Interpretation& interp) {
    switch (task) {
        case TaskKind::qa: return interp.answers().front();
        case TaskKind::nli: return nli_label_word(interp.label());
        case TaskKind::mt: return interp.translation();
    }
    throw Error("unreachable");
}

// The demonstrated intent of an exemplar: its sampled intent when annotated,
// the first interpretation otherwise (MT carries no sampled intents).
inline Exemplar exemplar_from_example(const AmbiguousExample& example) {
    Exemplar exemplar;
    exemplar.id = example.id;
    exemplar.input = example.input;
    exemplar.ambiguous = example.is_ambiguous;
    const std::size_t intent = static_cast<std::size_t>(example.gold_index.value_or(0));
    const auto& interp = example.interpretations.at(intent);
    exemplar.answer = rendered_answer(example.task, interp);
    exemplar.context = interp.text;
    if (example.is_ambiguous) {
        if (!example.exchange) {
            throw MissingExtrasError("exemplar '" + example.id +
                                     "' is ambiguous but has no clarifying exchange");
        }
        exemplar.question = example.exchange->question;
        exemplar.response = example.exchange->answers.at(intent);
    }
    return exemplar;
}

// Builds the pool, skipping examples that cannot serve as exemplars:
// ambiguous ones without an exchange and ones with an empty answer.
inline ExemplarPool build_exemplar_pool(const std::vector<AmbiguousExample>& examples,
                                        TaskKind task) {
    ExemplarPool pool;
    pool.task = task;
    for (const auto& example : examples) {
        if (example.is_ambiguous && !example.exchange) continue;
        Exemplar exemplar = exemplar_from_example(example);
        if (exemplar.answer.empty()) continue;
        pool.exemplars.push_back(std::move(exemplar));
    }
    return pool;
}

// Deterministic exemplar draw. With the 50-50 mix, ceil(n/2) ambiguous and
// floor(n/2) unambiguous exemplars are drawn and interleaved by a seeded
// shuffle.
inline std::vector<Exemplar> sample_exemplars(const ExemplarPool& pool, int n, std::uint64_t seed,
                                              bool mix_5050 = false) {
    if (n < 0) throw ConfigError("sample_exemplars: n must be >= 0");
    if (n == 0) return {};
    Rng rng(mix_seed(seed, "exemplars"));
    std::vector<std::size_t> picked;
    if (mix_5050) {
        const std::size_t need_ambiguous = static_cast<std::size_t>(n + 1) / 2;
        const std::size_t need_unambiguous = static_cast<std::size_t>(n) / 2;
        std::vector<std::size_t> ambiguous, unambiguous;
        for (std::size_t i = 0; i < pool.exemplars.size(); ++i) {
            (pool.exemplars[i].ambiguous ? ambiguous : unambiguous).push_back(i);
        }
        if (ambiguous.size() < need_ambiguous || unambiguous.size() < need_unambiguous) {
            throw PoolTooSmallError(
                "50-50 exemplar mix needs " + std::to_string(need_ambiguous) + " ambiguous + " +
                std::to_string(need_unambiguous) + " unambiguous, pool has " +
                std::to_string(ambiguous.size()) + " + " + std::to_string(unambiguous.size()));
        }
        rng.shuffle(ambiguous);
        rng.shuffle(unambiguous);
        picked.assign(ambiguous.begin(), ambiguous.begin() + static_cast<long>(need_ambiguous));
        picked.insert(picked.end(), unambiguous.begin(),
                      unambiguous.begin() + static_cast<long>(need_unambiguous));
        rng.shuffle(picked);
    } else {
        if (pool.exemplars.size() < static_cast<std::size_t>(n)) {
            throw PoolTooSmallError("need " + std::to_string(n) + " exemplars, pool has " +
                                    std::to_string(pool.exemplars.size()));
        }
        std::vector<std::size_t> all(pool.exemplars.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        rng.shuffle(all);
        picked.assign(all.begin(), all.begin() + n);
    }
    std::vector<Exemplar> out;
    out.reserve(picked.size());
    for (auto i : picked) out.push_back(pool.exemplars[i]);
    return out;
}

// ---- prompt assembly -------------------------------------------------------

// Per-variant inputs beyond the example itself.
struct PromptExtras {
    std::optional<std::string> clarifying_question;
    std::optional<std::string> clarifying_response;
    std::optional<std::string> disambiguated_input;  // QA/NLI Disambig
    std::optional<std::string> context;              // MT Disambig
};

namespace detail {

inline Substitutions exemplar_values(TaskKind task, const Exemplar& exemplar) {
    Substitutions values;
    values["input"] = exemplar.input;
    values["answer"] = exemplar.answer;
    values["translation"] = exemplar.answer;
    values["question"] = exemplar.question;
    values["response"] = exemplar.response;
    values["context"] = exemplar.context;
    if (task == TaskKind::nli) {
        const auto [premise, claim] = split_nli_input(exemplar.input);
        values["premise"] = premise;
        values["claim"] = claim;
    }
    return values;
}

inline void set_input(Substitutions& values, TaskKind task, const std::string& input) {
    values["input"] = input;
    if (task == TaskKind::nli) {
        const auto [premise, claim] = split_nli_input(input);
        values["premise"] = premise;
        values["claim"] = claim;
    }
}

inline const std::string& require_extra(const std::optional<std::string>& value,
                                        const char* what) {
    if (!value) throw MissingExtrasError(std::string("prompt variant requires ") + what);
    return *value;
}

inline void append(std::vector<ChatMessage>& messages, std::vector<ChatMessage> tail) {
    for (auto& m : tail) messages.push_back(std::move(m));
}

}  // namespace detail

// Renders the full message sequence for one example: system instruction,
// exemplar turns, then the live input awaiting the assistant's reply.
inline std::vector<ChatMessage> build_prompt(const TemplateSet& templates, PromptVariant variant,
                                             TaskKind task,
                                             const std::vector<Exemplar>& exemplars,
                                             const AmbiguousExample& example,
                                             const PromptExtras& extras = {}) {
    if (variant == PromptVariant::oracle) {
        throw ConfigError("oracle prompts are built by build_oracle_prompt");
    }
    const Template& tmpl = templates.get(task, variant);
    std::vector<ChatMessage> messages;
    messages.push_back(system_msg(tmpl.text("system")));

    for (const auto& exemplar : exemplars) {
        const auto values = detail::exemplar_values(task, exemplar);
        const char* section = nullptr;
        switch (variant) {
            case PromptVariant::direct:
            case PromptVariant::disambig:
                section = "exemplar";
                break;
            case PromptVariant::follow:
            case PromptVariant::intentsim_question:
            case PromptVariant::intentsim_answer:
                if (exemplar.ambiguous) {
                    section = "exemplar";
                } else if (tmpl.has("exemplar_direct")) {
                    section = "exemplar_direct";
                } else {
                    throw MissingExtrasError("variant '" + std::string(to_string(variant)) +
                                             "' needs exchange-bearing exemplars; '" +
                                             exemplar.id + "' has none");
                }
                break;
            case PromptVariant::selfask:
                section = exemplar.ambiguous ? "exemplar_ambiguous" : "exemplar_unambiguous";
                break;
            case PromptVariant::oracle:
                throw Error("unreachable");
        }
        detail::append(messages, tmpl.render_chat(section, values));
    }

    Substitutions live;
    detail::set_input(live, task, example.input);
    switch (variant) {
        case PromptVariant::direct:
        case PromptVariant::selfask:
            break;
        case PromptVariant::follow:
            live["question"] = detail::require_extra(extras.clarifying_question,
                                                     "the clarifying question");
            live["response"] = detail::require_extra(extras.clarifying_response,
                                                     "the clarifying response");
            break;
        case PromptVariant::disambig:
            if (task == TaskKind::mt) {
                live["context"] = detail::require_extra(extras.context, "the context sentence");
            } else {
                detail::set_input(live, task,
                                  detail::require_extra(extras.disambiguated_input,
                                                        "the disambiguated input"));
            }
            break;
        case PromptVariant::intentsim_question:
            break;
        case PromptVariant::intentsim_answer:
            live["question"] = detail::require_extra(extras.clarifying_question,
                                                     "the clarifying question");
            break;
        case PromptVariant::oracle:
            throw Error("unreachable");
    }
    detail::append(messages, tmpl.render_chat("live", live));
    return messages;
}

// The oracle prompt: one user message carrying instructions, two worked
// examples, and the live input with its numbered interpretations.
inline std::vector<ChatMessage> build_oracle_prompt(const TemplateSet& templates,
                                                    const AmbiguousExample& example) {
    if (!example.is_ambiguous || example.k() < 2) {
        throw Error("oracle prompts need an ambiguous example, got '" + example.id + "'");
    }
    const Template& tmpl = templates.get(example.task, PromptVariant::oracle);
    std::string body = tmpl.text("header");
    body += '\n';
    body += tmpl.render_text("input_line", {{"input", example.input}});
    for (std::size_t i = 0; i < example.k(); ++i) {
        const auto& interp = example.interpretations[i];
        // QA/NLI list disambiguated revisions; MT lists the target translations
        const std::string material =
            example.task == TaskKind::mt ? interp.translation() : interp.text;
        body += '\n';
        body += tmpl.render_text("interpretation_line",
                                 {{"index", std::to_string(i + 1)}, {"text", material}});
    }
    return {user_msg(body)};
}

// ---- output parsing --------------------------------------------------------

// Remainder of the line on which `prefix` first occurs, trimmed.
inline std::string extract_after_prefix(const std::string& text, const std::string& prefix) {
    const auto pos = text.find(prefix);
    if (pos == std::string::npos) {
        throw UnparseableOutputError("output lacks expected prefix '" + prefix + "'", text);
    }
    const auto start = pos + prefix.size();
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string value = trim_copy(text.substr(start, end - start));
    if (value.empty()) {
        throw UnparseableOutputError("empty payload after prefix '" + prefix + "'", text);
    }
    return value;
}

struct ParsedOutput {
    std::string text;                      // answer, translation, question, or response
    std::optional<EntailmentLabel> label;  // NLI task outputs only
};

// Reads a raw assistant completion according to the variant's format
// contract. Throws UnparseableOutputError; evaluation treats that as an
// incorrect answer rather than a run failure.
inline ParsedOutput parse_structured_output(const TemplateSet& templates, PromptVariant variant,
                                            TaskKind task, const std::string& completion) {
    const Template& tmpl = templates.get(task, variant);
    ParsedOutput parsed;
    switch (variant) {
        case PromptVariant::direct:
        case PromptVariant::follow:
        case PromptVariant::disambig: {
            const std::string& prefix = tmpl.text("answer_prefix");
            if (task == TaskKind::nli) {
                // the verdict token is the contract; the Answer: prefix is formatting
                std::string payload;
                try {
                    payload = extract_after_prefix(completion, prefix);
                } catch (const UnparseableOutputError&) {
                    payload = completion;
                }
                parsed.label = nli_label_from_text(payload);
                parsed.text = payload;
            } else {
                parsed.text = extract_after_prefix(completion, prefix);
            }
            break;
        }
        case PromptVariant::intentsim_question:
            parsed.text = extract_after_prefix(completion, tmpl.text("question_prefix"));
            break;
        case PromptVariant::intentsim_answer:
            parsed.text = extract_after_prefix(completion, tmpl.text("answer_prefix"));
            break;
        case PromptVariant::selfask:
            parsed.text = trim_copy(completion);
            break;
        case PromptVariant::oracle:
            throw ConfigError("oracle completions are parsed by parse_oracle_exchange");
    }
    return parsed;
}

// Parses an oracle completion into a clarifying exchange with exactly k
// responses, numbered 1..k.
inline ClarifyingExchange parse_oracle_exchange(const TemplateSet& templates, TaskKind task,
                                                const std::string& completion, std::size_t k) {
    const Template& tmpl = templates.get(task, PromptVariant::oracle);
    const std::string& question_prefix = tmpl.text("question_prefix");
    const std::string& response_prefix = tmpl.text("response_prefix");

    ClarifyingExchange exchange;
    try {
        exchange.question = extract_after_prefix(completion, question_prefix);
    } catch (const UnparseableOutputError& e) {
        throw ParseError("oracle output lacks '" + question_prefix + "': " + e.what());
    }
    for (std::size_t i = 1;; ++i) {
        const std::string marker = response_prefix + " " + std::to_string(i) + ":";
        try {
            exchange.answers.push_back(extract_after_prefix(completion, marker));
        } catch (const UnparseableOutputError&) {
            break;
        }
    }
    if (exchange.answers.size() != k) {
        throw ParseError("oracle produced " + std::to_string(exchange.answers.size()) +
                         " clarification responses, expected " + std::to_string(k));
    }
    return exchange;
}

struct OracleResult {
    ClarifyingExchange exchange;
    std::vector<std::string> warnings;
};

// Runs the oracle prompt for one ambiguous example and parses the exchange.
// MT responses are expected in the source language; non-ASCII responses are
// flagged as likely leakage but still accepted.
inline OracleResult generate_oracle_clarification(ChatGateway& gateway,
                                                  const TemplateSet& templates,
                                                  const AmbiguousExample& example,
                                                  int max_tokens = 512) {
    const auto prompt = build_oracle_prompt(templates, example);
    const auto completion = gateway.greedy_complete(prompt, max_tokens);
    OracleResult result;
    result.exchange = parse_oracle_exchange(templates, example.task, completion.text, example.k());
    if (example.task == TaskKind::mt) {
        for (std::size_t i = 0; i < result.exchange.answers.size(); ++i) {
            const auto& answer = result.exchange.answers[i];
            const bool non_ascii = std::any_of(answer.begin(), answer.end(), [](unsigned char c) {
                return c > 0x7F;
            });
            if (non_ascii) {
                result.warnings.push_back("response " + std::to_string(i + 1) +
                                          " may leak the target language: " + answer);
            }
        }
    }
    return result;
}

}  // namespace clarify
