#pragma once

// Orchestration for the CLI subcommands: outcome evaluation per prompt
// variant, estimator scoring over an example pool, budget reports, and the
// artifact directory each run leaves behind.
//
// Artifact layout under the output directory:
//   report.json             machine-readable summary (includes the config)
//   report.txt              rendered text, byte-identical to `report` output
//   outcomes.jsonl          per-example direct/clarified performance
//   scores.jsonl            per-example uncertainty scores, one line each
//   responsiveness.jsonl    per-example rows for the responsiveness command
//   clarified_corpus.jsonl  corpus with generated exchanges attached
//   clarifications.jsonl    per-example generation results
//   run_meta.json           timing and call counters (not deterministic)

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <clarify/corpus.hpp>
#include <clarify/equivalence.hpp>
#include <clarify/errors.hpp>
#include <clarify/estimators.hpp>
#include <clarify/gateway.hpp>
#include <clarify/http_backend.hpp>
#include <clarify/http_judge.hpp>
#include <clarify/metrics.hpp>
#include <clarify/mock_backend.hpp>
#include <clarify/prompting.hpp>
#include <clarify/run_config.hpp>
#include <clarify/templates.hpp>
#include <clarify/types.hpp>

#include <json.hpp>

namespace clarify {

// ---- worker pool -----------------------------------------------------------

// Runs fn(0..n-1) across up to `workers` threads. The first exception stops
// the pool and is rethrown on the caller thread once everyone has joined.
template <typename Fn>
inline void parallel_for(std::size_t n, int workers, Fn&& fn) {
    if (n == 0) return;
    const int thread_count =
        std::max(1, std::min(workers, static_cast<int>(std::min<std::size_t>(n, 64))));
    if (thread_count == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(thread_count));
    for (int t = 0; t < thread_count; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---- factories -------------------------------------------------------------

inline std::shared_ptr<ChatBackend> make_backend(const RunConfig& config) {
    if (config.backend == BackendKind::mock) {
        std::ifstream in(config.mock_script_path);
        if (!in) throw ConfigError("cannot open mock script: " + config.mock_script_path);
        nlohmann::json script;
        try {
            in >> script;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("mock script " + config.mock_script_path +
                              " is not valid JSON: " + e.what());
        }
        return std::make_shared<ScriptedBackend>(script);
    }
    return std::make_shared<HttpBackend>(*config.http_backend);
}

inline ChatGateway make_gateway(const RunConfig& config) {
    GatewayOptions options;
    options.cache_dir = config.cache_dir.empty()
                            ? (std::filesystem::path(config.out_dir) / "cache").string()
                            : config.cache_dir;
    options.max_concurrency = config.max_concurrency;
    options.max_retries = config.max_retries;
    return ChatGateway(make_backend(config), options);
}

inline std::unique_ptr<EntailmentJudge> make_judge(const RunConfig& config) {
    switch (config.judge) {
        case JudgeKind::exact_match:
            return std::make_unique<ExactMatchJudge>();
        case JudgeKind::scripted: {
            std::ifstream in(config.judge_script_path);
            if (!in) throw ConfigError("cannot open judge script: " + config.judge_script_path);
            nlohmann::json script;
            try {
                in >> script;
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("judge script " + config.judge_script_path +
                                  " is not valid JSON: " + e.what());
            }
            return std::make_unique<ScriptedJudge>(script);
        }
        case JudgeKind::http:
            return std::make_unique<HttpJudge>(*config.http_judge);
    }
    throw ConfigError("unknown judge kind");
}

inline TemplateSet make_templates(const RunConfig& config) {
    if (config.templates_dir.empty()) return TemplateSet::builtin();
    return TemplateSet::from_directory(config.templates_dir);
}

// ---- outcome evaluation ----------------------------------------------------

struct VariantPerformance {
    double performance = 0.0;
    std::vector<std::string> completions;  // greedy outputs (QA/NLI only)
};

namespace detail {

// Grades one completion against one interpretation; unparseable output
// counts as a miss rather than an error.
inline double grade_completion(const TemplateSet& templates, PromptVariant variant, TaskKind task,
                               const std::string& completion, const Interpretation& interp) {
    try {
        const ParsedOutput parsed = parse_structured_output(templates, variant, task, completion);
        if (task == TaskKind::qa) {
            return static_cast<double>(answer_recall(parsed.text, interp.answers()));
        }
        if (!parsed.label.has_value()) return 0.0;
        return static_cast<double>(nli_item_score(*parsed.label, interp.label()));
    } catch (const UnparseableOutputError&) {
        return 0.0;
    }
}

inline PromptExtras clarified_extras(const AmbiguousExample& example, PromptVariant variant,
                                     std::size_t intent) {
    PromptExtras extras;
    if (variant == PromptVariant::follow) {
        if (!example.exchange.has_value()) {
            throw MissingExtrasError("example '" + example.id + "' has no clarifying exchange");
        }
        extras.clarifying_question = example.exchange->question;
        extras.clarifying_response = example.exchange->answers.at(intent);
    } else if (variant == PromptVariant::disambig) {
        if (example.task == TaskKind::mt) {
            extras.context = example.interpretations.at(intent).text;
        } else {
            extras.disambiguated_input = example.interpretations.at(intent).text;
        }
    }
    return extras;
}

// Log-probability of each interpretation's translation as the assistant
// continuation of `messages`.
inline std::vector<double> translation_scores(ChatGateway& gateway, const TemplateSet& templates,
                                              PromptVariant variant,
                                              const std::vector<ChatMessage>& messages,
                                              const AmbiguousExample& example) {
    const std::string& prefix =
        templates.get(TaskKind::mt, variant).text("answer_prefix");
    std::vector<double> scores;
    scores.reserve(example.k());
    for (const auto& interp : example.interpretations) {
        scores.push_back(gateway.score_continuation(messages, prefix + " " + interp.translation()));
    }
    return scores;
}

inline double best_alternative(const std::vector<double>& scores, std::size_t intended) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (j != intended) best = std::max(best, scores[j]);
    }
    return best;
}

}  // namespace detail

// True when the clarified variant can actually be evaluated for this
// example: Follow needs an annotated exchange, Disambig needs the
// interpretation rewrites every ambiguous example carries.
inline bool can_clarify(const AmbiguousExample& example, PromptVariant variant) {
    if (!example.is_ambiguous) return false;
    if (variant == PromptVariant::follow) {
        return example.exchange.has_value() &&
               example.exchange->answers.size() == example.k();
    }
    return variant == PromptVariant::disambig;
}

// Intent-weighted performance of one prompt variant on one example. QA/NLI
// grade greedy completions; MT scores each candidate translation and asks
// the intended one to beat every alternative strictly. Unambiguous MT
// examples have no alternative, so Direct is 1 by definition.
inline VariantPerformance variant_performance(ChatGateway& gateway, const PromptingPlan& plan,
                                              const AmbiguousExample& example,
                                              PromptVariant variant, WeightMode weighting,
                                              int max_tokens) {
    const TemplateSet& templates = plan.templates_ref();
    const TaskKind task = plan.task;
    const IntentWeighting weights = weight_intents(example, weighting);
    const auto& base_exemplars =
        variant == PromptVariant::follow ? plan.followup : plan.direct;
    const auto exemplars = detail::without_example(base_exemplars, example.id);

    VariantPerformance result;
    if (task == TaskKind::mt) {
        if (variant == PromptVariant::direct && !example.is_ambiguous) {
            result.performance = 1.0;
            return result;
        }
        CompensatedSum perf;
        if (variant == PromptVariant::direct) {
            const auto messages = build_prompt(templates, variant, task, exemplars, example);
            const auto scores =
                detail::translation_scores(gateway, templates, variant, messages, example);
            for (std::size_t i = 0; i < example.k(); ++i) {
                if (weights.weights[i] <= 0.0) continue;
                perf.add(weights.weights[i] *
                         contrastive_outcome(scores[i], detail::best_alternative(scores, i)));
            }
        } else {
            for (std::size_t i = 0; i < example.k(); ++i) {
                if (weights.weights[i] <= 0.0) continue;
                const auto extras = detail::clarified_extras(example, variant, i);
                const auto messages =
                    build_prompt(templates, variant, task, exemplars, example, extras);
                const auto scores =
                    detail::translation_scores(gateway, templates, variant, messages, example);
                perf.add(weights.weights[i] *
                         contrastive_outcome(scores[i], detail::best_alternative(scores, i)));
            }
        }
        result.performance = perf.value();
        return result;
    }

    CompensatedSum perf;
    if (variant == PromptVariant::direct) {
        const auto messages = build_prompt(templates, variant, task, exemplars, example);
        const Completion completion = gateway.greedy_complete(messages, max_tokens);
        result.completions.push_back(completion.text);
        for (std::size_t i = 0; i < example.k(); ++i) {
            if (weights.weights[i] <= 0.0) continue;
            perf.add(weights.weights[i] *
                     detail::grade_completion(templates, variant, task, completion.text,
                                              example.interpretations[i]));
        }
    } else {
        for (std::size_t i = 0; i < example.k(); ++i) {
            if (weights.weights[i] <= 0.0) continue;
            const auto extras = detail::clarified_extras(example, variant, i);
            const auto messages =
                build_prompt(templates, variant, task, exemplars, example, extras);
            const Completion completion = gateway.greedy_complete(messages, max_tokens);
            result.completions.push_back(completion.text);
            perf.add(weights.weights[i] *
                     detail::grade_completion(templates, variant, task, completion.text,
                                              example.interpretations[i]));
        }
    }
    result.performance = perf.value();
    return result;
}

struct OutcomeComputation {
    std::vector<ExampleOutcome> outcomes;  // pool order
    std::vector<nlohmann::json> records;   // pool order, outcomes.jsonl rows
    int missing_exchange = 0;              // ambiguous examples scored as direct
};

// Direct and clarified performance for every pool example. Examples the
// clarified variant cannot touch (unambiguous ones, or ambiguous ones with
// no annotated exchange under Follow) keep their direct performance.
inline OutcomeComputation compute_outcomes(ChatGateway& gateway, const PromptingPlan& plan,
                                           const std::vector<AmbiguousExample>& pool,
                                           PromptVariant clarified_variant, WeightMode weighting,
                                           int max_tokens, int workers) {
    OutcomeComputation out;
    out.outcomes.resize(pool.size());
    out.records.resize(pool.size());
    std::vector<char> clarified_flags(pool.size(), 0);

    parallel_for(pool.size(), workers, [&](std::size_t i) {
        const AmbiguousExample& example = pool[i];
        const VariantPerformance direct = variant_performance(
            gateway, plan, example, PromptVariant::direct, weighting, max_tokens);
        const bool clarifiable = can_clarify(example, clarified_variant);
        const VariantPerformance clarified =
            clarifiable ? variant_performance(gateway, plan, example, clarified_variant,
                                              weighting, max_tokens)
                        : direct;
        clarified_flags[i] = clarifiable ? 1 : 0;

        ExampleOutcome outcome;
        outcome.example_id = example.id;
        outcome.perf_direct = direct.performance;
        outcome.perf_clarified = clarified.performance;
        out.outcomes[i] = outcome;

        nlohmann::json record{
            {"example_id", example.id},
            {"ambiguous", example.is_ambiguous},
            {"clarified_variant", to_string(clarified_variant)},
            {"clarified_computed", clarifiable},
            {"perf_direct", direct.performance},
            {"perf_clarified", clarified.performance},
            {"improved", outcome.improved()},
        };
        if (!direct.completions.empty()) record["direct_completions"] = direct.completions;
        if (clarifiable && !clarified.completions.empty()) {
            record["clarified_completions"] = clarified.completions;
        }
        out.records[i] = std::move(record);
    });

    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].is_ambiguous && !clarified_flags[i]) ++out.missing_exchange;
    }
    return out;
}

// ---- report rendering ------------------------------------------------------

namespace detail {

inline std::string format_fixed(double value, int decimals) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.*f", decimals, value);
    return buffer;
}

inline std::string format_perf(double value) { return format_fixed(value * 100.0, 1); }

inline std::string format_auroc_cell(const nlohmann::json& value) {
    if (value.is_null()) return "—";
    return format_fixed(value.get<double>(), 3);
}

inline std::string format_gain_cell(const nlohmann::json& value) {
    if (value.is_null()) return "—";
    return std::to_string(std::llround(value.get<double>())) + "%";
}

inline std::string format_budget_header(double b) {
    std::ostringstream out;
    out << "b=" << b << "%";
    return out.str();
}

inline std::string pad_left(const std::string& text, std::size_t width) {
    if (text.size() >= width) return text;
    return std::string(width - text.size(), ' ') + text;
}

inline std::string pad_right(const std::string& text, std::size_t width) {
    if (text.size() >= width) return text;
    return text + std::string(width - text.size(), ' ');
}

inline std::string render_when_to_clarify(const nlohmann::json& report) {
    std::ostringstream out;
    out << "when-to-clarify report\n";
    out << "======================\n\n";
    const auto& config = report.at("config");
    const auto& counts = report.at("counts");
    out << "task: " << config.at("task").get<std::string>() << "\n";
    out << "pool: " << config.at("pool").get<std::string>() << " ("
        << counts.at("pool").get<int>() << " examples, " << counts.at("ambiguous").get<int>()
        << " ambiguous)\n";
    out << "clarified variant: " << report.at("clarified_variant").get<std::string>() << "\n";
    out << "weighting: " << report.at("weighting").get<std::string>() << "\n";
    out << "mean direct performance: " << format_perf(report.at("perf_direct_mean").get<double>())
        << "\n";
    out << "mean clarified performance: "
        << format_perf(report.at("perf_clarified_mean").get<double>()) << "\n";
    if (counts.at("missing_exchange").get<int>() > 0) {
        out << "ambiguous examples without exchanges (scored as direct): "
            << counts.at("missing_exchange").get<int>() << "\n";
    }
    out << "\n";

    const auto& methods = report.at("methods");
    std::vector<double> budgets;
    if (!methods.empty()) {
        for (const auto& row : methods.front().at("rows")) {
            budgets.push_back(row.at("b").get<double>());
        }
    }
    std::string header = pad_right("method", 20) + pad_left("AUROC", 7);
    for (double b : budgets) header += pad_left(format_budget_header(b), 16);
    out << header << "\n";
    out << std::string(20 + 7 + 16 * budgets.size(), '-') << "\n";
    for (const auto& method : methods) {
        std::string line = pad_right(method.at("method").get<std::string>(), 20) +
                           pad_left(format_auroc_cell(method.at("auroc")), 7);
        for (const auto& row : method.at("rows")) {
            const std::string cell = format_perf(row.at("performance").get<double>()) + " (" +
                                     format_gain_cell(row.at("relative_gain_percent")) + ")";
            line += pad_left(cell, 16);
        }
        out << line << "\n";
    }

    if (report.contains("warnings") && !report.at("warnings").empty()) {
        out << "\nwarnings:\n";
        for (const auto& warning : report.at("warnings")) {
            out << "  " << warning.at("method").get<std::string>() << " / "
                << warning.at("example_id").get<std::string>() << ": "
                << warning.at("error").get<std::string>() << "\n";
        }
    }
    return out.str();
}

inline std::string render_responsiveness(const nlohmann::json& report) {
    std::ostringstream out;
    out << "responsiveness report\n";
    out << "=====================\n\n";
    const auto& config = report.at("config");
    const auto& counts = report.at("counts");
    out << "task: " << config.at("task").get<std::string>() << "\n";
    out << "pool: " << counts.at("pool").get<int>() << " ambiguous examples with exchanges\n";
    out << "skipped: " << counts.at("unambiguous_skipped").get<int>() << " unambiguous, "
        << counts.at("missing_exchange_skipped").get<int>() << " ambiguous without exchanges\n";

    std::string current_weighting;
    bool first_group = true;
    for (const auto& row : report.at("rows")) {
        const std::string weighting = row.at("weighting").get<std::string>();
        if (weighting != current_weighting) {
            current_weighting = weighting;
            out << "\n";
            if (!first_group) out << "\n";
            first_group = false;
            out << "weighting: " << weighting << "\n";
            out << pad_right("variant", 20) << pad_left("performance", 13)
                << pad_left("delta vs direct", 18) << "\n";
            out << std::string(20 + 13 + 18, '-') << "\n";
        }
        std::string delta = "—";
        if (!row.at("delta_vs_direct").is_null()) {
            const double value = row.at("delta_vs_direct").get<double>() * 100.0;
            char buffer[64];
            std::snprintf(buffer, sizeof(buffer), "%+.1f", value);
            delta = buffer;
        }
        out << pad_right(row.at("variant").get<std::string>(), 20)
            << pad_left(format_perf(row.at("performance").get<double>()), 13)
            << pad_left(delta, 18) << "\n";
    }
    return out.str();
}

inline std::string render_generate(const nlohmann::json& report) {
    std::ostringstream out;
    out << "generate-clarifications report\n";
    out << "==============================\n\n";
    const auto& config = report.at("config");
    const auto& counts = report.at("counts");
    out << "task: " << config.at("task").get<std::string>() << "\n";
    out << "examples: " << counts.at("total").get<int>() << "\n";
    out << "generated: " << counts.at("generated").get<int>() << "\n";
    out << "already present: " << counts.at("already_present").get<int>() << "\n";
    out << "failed: " << counts.at("failed").get<int>() << "\n";
    out << "skipped (unambiguous): " << counts.at("skipped_unambiguous").get<int>() << "\n";
    if (report.contains("warnings") && !report.at("warnings").empty()) {
        out << "\nwarnings:\n";
        for (const auto& warning : report.at("warnings")) {
            out << "  " << warning.get<std::string>() << "\n";
        }
    }
    if (report.contains("failures") && !report.at("failures").empty()) {
        out << "\nfailures:\n";
        for (const auto& failure : report.at("failures")) {
            out << "  " << failure.at("example_id").get<std::string>() << ": "
                << failure.at("error").get<std::string>() << "\n";
        }
    }
    return out.str();
}

}  // namespace detail

inline std::string render_report(const nlohmann::json& report) {
    const std::string command = report.at("command").get<std::string>();
    if (command == "when-to-clarify") return detail::render_when_to_clarify(report);
    if (command == "responsiveness") return detail::render_responsiveness(report);
    if (command == "generate-clarifications") return detail::render_generate(report);
    throw SchemaError("unknown report command: " + command);
}

// ---- artifacts -------------------------------------------------------------

struct RunArtifact {
    std::filesystem::path dir;

    std::filesystem::path report_json() const { return dir / "report.json"; }
    std::filesystem::path report_txt() const { return dir / "report.txt"; }
    std::filesystem::path outcomes() const { return dir / "outcomes.jsonl"; }
    std::filesystem::path scores() const { return dir / "scores.jsonl"; }
    std::filesystem::path responsiveness() const { return dir / "responsiveness.jsonl"; }
    std::filesystem::path clarified_corpus() const { return dir / "clarified_corpus.jsonl"; }
    std::filesystem::path clarifications() const { return dir / "clarifications.jsonl"; }
    std::filesystem::path run_meta() const { return dir / "run_meta.json"; }
};

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<nlohmann::json>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& row : rows) out << row.dump() << '\n';
}

inline void write_report(const RunArtifact& artifact, const nlohmann::json& report) {
    write_text_file(artifact.report_json(), report.dump(2) + "\n");
    write_text_file(artifact.report_txt(), render_report(report));
}

inline void write_run_meta(const RunArtifact& artifact, const ChatGateway& gateway,
                           std::chrono::steady_clock::time_point started) {
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    nlohmann::json meta{
        {"backend_calls", gateway.backend_calls()},
        {"cache_hits", gateway.cache_hits()},
        {"wall_ms", elapsed.count()},
    };
    write_text_file(artifact.run_meta(), meta.dump(2) + "\n");
}

inline PromptVariant clarified_variant_from(const RunConfig& config) {
    for (PromptVariant variant : config.variants) {
        if (variant != PromptVariant::direct) return variant;
    }
    throw ConfigError("no clarified variant configured; add follow or disambig to variants");
}

}  // namespace detail

// ---- commands --------------------------------------------------------------

// Fills in missing clarifying exchanges by asking the backend, with the full
// interpretation list visible, to write the question and one response per
// interpretation. Per-example failures are recorded, not fatal.
inline nlohmann::json cmd_generate_clarifications(const RunConfig& config) {
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    std::vector<AmbiguousExample> corpus = load_corpus(config.corpus_path, config.task);
    const TemplateSet templates = make_templates(config);
    ChatGateway gateway = make_gateway(config);

    std::vector<std::size_t> todo;
    int already_present = 0;
    int skipped_unambiguous = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (!corpus[i].is_ambiguous) {
            ++skipped_unambiguous;
        } else if (corpus[i].exchange.has_value()) {
            ++already_present;
        } else {
            todo.push_back(i);
        }
    }

    struct Generated {
        std::optional<OracleResult> result;
        std::string error;
    };
    std::vector<Generated> slots(todo.size());
    parallel_for(todo.size(), config.max_concurrency, [&](std::size_t t) {
        const AmbiguousExample& example = corpus[todo[t]];
        try {
            slots[t].result =
                generate_oracle_clarification(gateway, templates, example, config.max_tokens);
        } catch (const TransportError&) {
            throw;
        } catch (const Error& e) {
            slots[t].error = e.what();
        }
    });

    int generated = 0;
    int failed = 0;
    std::vector<std::string> warnings;
    std::vector<nlohmann::json> failures;
    std::vector<nlohmann::json> rows;
    for (std::size_t t = 0; t < todo.size(); ++t) {
        AmbiguousExample& example = corpus[todo[t]];
        if (slots[t].result.has_value()) {
            const OracleResult& result = *slots[t].result;
            example.exchange = result.exchange;
            ++generated;
            nlohmann::json row{
                {"example_id", example.id},
                {"question", result.exchange.question},
                {"responses", result.exchange.answers},
            };
            if (!result.warnings.empty()) row["warnings"] = result.warnings;
            rows.push_back(std::move(row));
            for (const auto& warning : result.warnings) {
                warnings.push_back(example.id + ": " + warning);
            }
        } else {
            ++failed;
            rows.push_back({{"example_id", example.id}, {"error", slots[t].error}});
            failures.push_back({{"example_id", example.id}, {"error", slots[t].error}});
        }
    }
    if (corpus.empty()) warnings.push_back("corpus has no examples");

    RunArtifact artifact{std::filesystem::path(config.out_dir)};
    std::filesystem::create_directories(artifact.dir);
    save_corpus(artifact.clarified_corpus().string(), corpus);
    detail::write_jsonl(artifact.clarifications(), rows);

    nlohmann::json report{
        {"tool_version", kToolVersion},
        {"command", "generate-clarifications"},
        {"config", config.to_json()},
        {"counts",
         {{"total", static_cast<int>(corpus.size())},
          {"generated", generated},
          {"already_present", already_present},
          {"failed", failed},
          {"skipped_unambiguous", skipped_unambiguous}}},
        {"warnings", warnings},
        {"failures", failures},
    };
    detail::write_report(artifact, report);
    detail::write_run_meta(artifact, gateway, started);
    return report;
}

// Measures how much each prompt variant recovers once the annotated
// clarifying exchange is in the transcript, per intent weighting.
inline nlohmann::json cmd_responsiveness(const RunConfig& config) {
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    const std::vector<AmbiguousExample> corpus = load_corpus(config.corpus_path, config.task);
    const TemplateSet templates = make_templates(config);
    ChatGateway gateway = make_gateway(config);

    std::vector<AmbiguousExample> pool;
    int unambiguous_skipped = 0;
    int missing_exchange_skipped = 0;
    for (const auto& example : corpus) {
        if (!example.is_ambiguous) {
            ++unambiguous_skipped;
        } else if (!example.exchange.has_value() ||
                   example.exchange->answers.size() != example.k()) {
            ++missing_exchange_skipped;
        } else {
            pool.push_back(example);
        }
    }
    if (pool.empty()) {
        throw ConfigError("no ambiguous examples with exchanges in " + config.corpus_path);
    }

    const ExemplarPool exemplar_pool = build_exemplar_pool(corpus, config.task);
    const PromptingPlan plan = make_prompting_plan(templates, config.task, exemplar_pool,
                                                   config.exemplar_count, *config.seed);

    std::vector<nlohmann::json> record_rows;
    std::vector<nlohmann::json> summary_rows;
    for (WeightMode mode : config.effective_weightings()) {
        std::optional<double> direct_perf;
        for (PromptVariant variant : config.variants) {
            std::vector<double> perfs(pool.size(), 0.0);
            parallel_for(pool.size(), config.max_concurrency, [&](std::size_t i) {
                perfs[i] = variant_performance(gateway, plan, pool[i], variant, mode,
                                               config.max_tokens)
                               .performance;
            });
            for (std::size_t i = 0; i < pool.size(); ++i) {
                record_rows.push_back({{"example_id", pool[i].id},
                                       {"variant", to_string(variant)},
                                       {"weighting", to_string(mode)},
                                       {"performance", perfs[i]}});
            }
            const double performance = mean(perfs);
            if (variant == PromptVariant::direct) direct_perf = performance;
            nlohmann::json row{{"variant", to_string(variant)},
                               {"weighting", to_string(mode)},
                               {"performance", performance}};
            if (variant != PromptVariant::direct && direct_perf.has_value()) {
                row["delta_vs_direct"] = performance - *direct_perf;
            } else {
                row["delta_vs_direct"] = nullptr;
            }
            summary_rows.push_back(std::move(row));
        }
    }

    RunArtifact artifact{std::filesystem::path(config.out_dir)};
    std::filesystem::create_directories(artifact.dir);
    detail::write_jsonl(artifact.responsiveness(), record_rows);

    nlohmann::json report{
        {"tool_version", kToolVersion},
        {"command", "responsiveness"},
        {"config", config.to_json()},
        {"counts",
         {{"pool", static_cast<int>(pool.size())},
          {"unambiguous_skipped", unambiguous_skipped},
          {"missing_exchange_skipped", missing_exchange_skipped}}},
        {"rows", summary_rows},
    };
    detail::write_report(artifact, report);
    detail::write_run_meta(artifact, gateway, started);
    return report;
}

// Scores every pool example with each configured estimator, evaluates the
// fixed-budget policy the scores induce, and reports AUROC plus budget rows
// per method. Per-example estimator failures drop the example from that
// method's evaluation; a method failing on the whole pool aborts the run.
inline nlohmann::json cmd_when_to_clarify(const RunConfig& config) {
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    const auto weightings = config.effective_weightings();
    if (weightings.size() != 1) {
        throw ConfigError("when-to-clarify needs exactly one weighting");
    }
    const WeightMode mode = weightings.front();
    const PromptVariant clarified_variant = detail::clarified_variant_from(config);

    const std::vector<AmbiguousExample> corpus = load_corpus(config.corpus_path, config.task);
    const TemplateSet templates = make_templates(config);
    ChatGateway gateway = make_gateway(config);
    const std::unique_ptr<EntailmentJudge> judge = make_judge(config);

    std::vector<AmbiguousExample> pool;
    for (const auto& example : corpus) {
        if (config.pool == BudgetPool::full || example.is_ambiguous) pool.push_back(example);
    }
    if (pool.empty()) throw ConfigError("example pool is empty");
    int ambiguous_count = 0;
    for (const auto& example : pool) {
        if (example.is_ambiguous) ++ambiguous_count;
    }

    const ExemplarPool exemplar_pool = build_exemplar_pool(corpus, config.task);
    const PromptingPlan plan = make_prompting_plan(templates, config.task, exemplar_pool,
                                                   config.exemplar_count, *config.seed);

    const OutcomeComputation outcomes = compute_outcomes(
        gateway, plan, pool, clarified_variant, mode, config.max_tokens, config.max_concurrency);

    std::set<std::string> all_ids;
    for (const auto& outcome : outcomes.outcomes) all_ids.insert(outcome.example_id);
    const double perf_direct_mean = budget_performance(outcomes.outcomes, {});
    const double perf_clarified_mean = budget_performance(outcomes.outcomes, all_ids);

    const EstimatorConfig estimator_config = config.estimator_config();
    std::vector<nlohmann::json> score_rows;
    std::vector<nlohmann::json> method_reports;
    std::vector<nlohmann::json> warnings;
    for (const std::string& method : config.estimators) {
        std::vector<std::optional<UncertaintyScore>> slots(pool.size());
        std::vector<std::string> errors(pool.size());
        std::mutex error_mutex;
        std::exception_ptr first_example_error;
        parallel_for(pool.size(), config.max_concurrency, [&](std::size_t i) {
            try {
                slots[i] = score_example(method, gateway, *judge, plan, pool[i],
                                         estimator_config);
            } catch (const TransportError&) {
                throw;
            } catch (const ConfigError&) {
                throw;
            } catch (const Error& e) {
                errors[i] = e.what();
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_example_error) first_example_error = std::current_exception();
            }
        });

        std::vector<ScoredId> method_scores;
        std::vector<ExampleOutcome> method_outcomes;
        int dropped = 0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (slots[i].has_value()) {
                score_rows.push_back(slots[i]->to_json());
                method_scores.push_back({slots[i]->example_id, slots[i]->value});
                method_outcomes.push_back(outcomes.outcomes[i]);
            } else {
                ++dropped;
                warnings.push_back({{"method", method},
                                    {"example_id", pool[i].id},
                                    {"error", errors[i]}});
            }
        }
        if (method_scores.empty()) {
            if (first_example_error) std::rethrow_exception(first_example_error);
            throw Error("estimator '" + method + "' produced no scores");
        }

        const BudgetReport budget_report =
            evaluate_budgets(method, method_scores, method_outcomes, config.budgets);
        nlohmann::json rows = nlohmann::json::array();
        for (const BudgetRow& row : budget_report.rows) {
            nlohmann::json row_json{{"b", row.b}, {"performance", row.performance}};
            if (row.relative_gain_percent.has_value()) {
                row_json["relative_gain_percent"] = *row.relative_gain_percent;
            } else {
                row_json["relative_gain_percent"] = nullptr;
            }
            rows.push_back(std::move(row_json));
        }
        nlohmann::json method_json{{"method", method},
                                   {"scored", static_cast<int>(method_scores.size())},
                                   {"dropped", dropped},
                                   {"rows", rows}};
        if (budget_report.auroc.has_value()) {
            method_json["auroc"] = *budget_report.auroc;
        } else {
            method_json["auroc"] = nullptr;
        }
        method_reports.push_back(std::move(method_json));
    }

    RunArtifact artifact{std::filesystem::path(config.out_dir)};
    std::filesystem::create_directories(artifact.dir);
    detail::write_jsonl(artifact.outcomes(), outcomes.records);
    detail::write_jsonl(artifact.scores(), score_rows);

    nlohmann::json report{
        {"tool_version", kToolVersion},
        {"command", "when-to-clarify"},
        {"config", config.to_json()},
        {"counts",
         {{"pool", static_cast<int>(pool.size())},
          {"ambiguous", ambiguous_count},
          {"missing_exchange", outcomes.missing_exchange}}},
        {"clarified_variant", to_string(clarified_variant)},
        {"weighting", to_string(mode)},
        {"perf_direct_mean", perf_direct_mean},
        {"perf_clarified_mean", perf_clarified_mean},
        {"methods", method_reports},
        {"warnings", warnings},
    };
    detail::write_report(artifact, report);
    detail::write_run_meta(artifact, gateway, started);
    return report;
}

// Loads a stored report (a directory with report.json, or the file itself)
// and re-renders the text form. Refuses artifacts written by a newer tool.
inline nlohmann::json load_report(const std::string& path) {
    std::filesystem::path p(path);
    if (std::filesystem::is_directory(p)) p /= "report.json";
    std::ifstream in(p);
    if (!in) throw Error("cannot open report: " + p.string());
    nlohmann::json report;
    try {
        in >> report;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("report is not valid JSON: ") + e.what());
    }
    if (!report.contains("tool_version")) throw SchemaError("report lacks tool_version");
    const std::string version = report.at("tool_version").get<std::string>();
    if (version_newer(version, kToolVersion)) {
        throw VersionMismatchError("report written by newer tool " + version + "; this is " +
                                   kToolVersion);
    }
    return report;
}

inline std::string cmd_report(const std::string& path) { return render_report(load_report(path)); }

}  // namespace clarify
