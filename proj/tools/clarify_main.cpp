// Command-line front end. Subcommands:
//   adapt                    convert a source dataset into the unified corpus
//   generate-clarifications  fill in missing clarifying exchanges
//   responsiveness           score prompt variants against annotated exchanges
//   when-to-clarify          estimator AUROC and fixed-budget evaluation
//   report                   re-render a stored report
//
// Exit codes: 0 on success (per-example failures are reported, not fatal),
// 1 on configuration or data errors, 2 when the backend transport gives up.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <clarify/adapters.hpp>
#include <clarify/run_config.hpp>
#include <clarify/runner.hpp>

#include <CLI11.hpp>

namespace {

struct RunOverrides {
    std::string config_path;
    std::optional<std::string> task;
    std::optional<std::string> corpus;
    std::optional<std::string> backend;
    std::optional<std::string> mock_script;
    std::optional<std::string> judge;
    std::optional<std::string> judge_script;
    std::vector<std::string> estimators;
    std::optional<int> samples;
    std::optional<double> temperature;
    std::optional<std::uint64_t> seed;
    std::optional<int> exemplars;
    std::optional<int> max_tokens;
    std::optional<std::string> templates;
    std::vector<std::string> variants;
    std::vector<std::string> weightings;
    std::vector<double> budgets;
    std::optional<std::string> pool;
    std::optional<std::string> cache_dir;
    std::optional<std::string> out;
    std::optional<int> max_concurrency;
};

void add_run_options(CLI::App* cmd, RunOverrides& o) {
    cmd->add_option("--config", o.config_path, "JSON config file; flags override its fields");
    cmd->add_option("--task", o.task, "task kind: qa, nli, or mt");
    cmd->add_option("--corpus", o.corpus, "unified corpus JSONL file");
    cmd->add_option("--backend", o.backend, "backend kind: mock or http");
    cmd->add_option("--mock-script", o.mock_script, "scripted backend JSON file");
    cmd->add_option("--judge", o.judge, "judge kind: exact_match, scripted, or http");
    cmd->add_option("--judge-script", o.judge_script, "scripted judge JSON file");
    cmd->add_option("--estimators", o.estimators, "estimators to run")->delimiter(',');
    cmd->add_option("--samples", o.samples, "samples per example for sampling estimators");
    cmd->add_option("--temperature", o.temperature, "sampling temperature");
    cmd->add_option("--seed", o.seed, "run seed (required)");
    cmd->add_option("--exemplars", o.exemplars, "few-shot exemplars per prompt");
    cmd->add_option("--max-tokens", o.max_tokens, "completion token cap");
    cmd->add_option("--templates", o.templates, "template directory (default: built-in)");
    cmd->add_option("--variants", o.variants, "prompt variants to evaluate")->delimiter(',');
    cmd->add_option("--weighting", o.weightings, "intent weightings")->delimiter(',');
    cmd->add_option("--budget", o.budgets, "interaction budgets in percent")->delimiter(',');
    cmd->add_option("--pool", o.pool, "example pool: full or ambiguous_only");
    cmd->add_option("--cache-dir", o.cache_dir, "completion cache directory");
    cmd->add_option("--out", o.out, "artifact output directory");
    cmd->add_option("--max-concurrency", o.max_concurrency, "parallel backend requests");
}

clarify::RunConfig build_config(const RunOverrides& o) {
    clarify::RunConfig config;
    if (!o.config_path.empty()) config = clarify::RunConfig::from_file(o.config_path);
    if (o.task) config.task = clarify::task_from_string(*o.task);
    if (o.corpus) config.corpus_path = *o.corpus;
    if (o.backend) config.backend = clarify::backend_kind_from_string(*o.backend);
    if (o.mock_script) config.mock_script_path = *o.mock_script;
    if (o.judge) config.judge = clarify::judge_kind_from_string(*o.judge);
    if (o.judge_script) config.judge_script_path = *o.judge_script;
    if (!o.estimators.empty()) config.estimators = o.estimators;
    if (o.samples) config.samples = *o.samples;
    if (o.temperature) config.temperature = *o.temperature;
    if (o.seed) config.seed = *o.seed;
    if (o.exemplars) config.exemplar_count = *o.exemplars;
    if (o.max_tokens) config.max_tokens = *o.max_tokens;
    if (o.templates) config.templates_dir = *o.templates;
    if (!o.variants.empty()) {
        config.variants.clear();
        for (const auto& name : o.variants) {
            config.variants.push_back(clarify::prompt_variant_from_string(name));
        }
    }
    if (!o.weightings.empty()) {
        config.weightings.clear();
        for (const auto& name : o.weightings) {
            config.weightings.push_back(clarify::weight_mode_from_string(name));
        }
    }
    if (!o.budgets.empty()) config.budgets = o.budgets;
    if (o.pool) config.pool = clarify::budget_pool_from_string(*o.pool);
    if (o.cache_dir) config.cache_dir = *o.cache_dir;
    if (o.out) config.out_dir = *o.out;
    if (o.max_concurrency) config.max_concurrency = *o.max_concurrency;
    return config;
}

int run_adapt(const std::string& source, const std::string& input, const std::string& out,
              std::string drops_path) {
    clarify::AdaptResult result;
    if (source == "ambigqa") {
        result = clarify::adapt_ambigqa(input);
    } else if (source == "ambient") {
        result = clarify::adapt_ambient(input);
    } else if (source == "discoursemt") {
        result = clarify::adapt_discoursemt(input);
    } else {
        throw clarify::ConfigError("unknown adapt source: " + source);
    }
    clarify::save_corpus(out, result.examples);
    if (drops_path.empty()) drops_path = out + ".drops.jsonl";
    clarify::write_drop_report(drops_path, result.drops);
    std::cout << "adapted " << result.examples.size() << " examples to " << out << "\n";
    std::cout << "dropped " << result.drops.size() << " records (reasons in " << drops_path
              << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"clarifying-questions evaluation toolkit"};
    app.require_subcommand(1);

    std::string adapt_source;
    std::string adapt_input;
    std::string adapt_out;
    std::string adapt_drops;
    auto* adapt = app.add_subcommand("adapt", "convert a source dataset to the unified corpus");
    adapt->add_option("source", adapt_source, "ambigqa, ambient, or discoursemt")->required();
    adapt->add_option("--input", adapt_input, "source dataset file")->required();
    adapt->add_option("--out", adapt_out, "unified corpus JSONL to write")->required();
    adapt->add_option("--drops", adapt_drops, "drop report path (default: <out>.drops.jsonl)");

    RunOverrides generate_overrides;
    auto* generate =
        app.add_subcommand("generate-clarifications", "fill in missing clarifying exchanges");
    add_run_options(generate, generate_overrides);

    RunOverrides responsiveness_overrides;
    auto* responsiveness =
        app.add_subcommand("responsiveness", "score prompt variants with annotated exchanges");
    add_run_options(responsiveness, responsiveness_overrides);

    RunOverrides when_overrides;
    auto* when =
        app.add_subcommand("when-to-clarify", "estimator AUROC and fixed-budget evaluation");
    add_run_options(when, when_overrides);

    std::string report_path;
    auto* report = app.add_subcommand("report", "re-render a stored report");
    report->add_option("path", report_path, "artifact directory or report.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (adapt->parsed()) {
            return run_adapt(adapt_source, adapt_input, adapt_out, adapt_drops);
        }
        if (generate->parsed()) {
            const auto summary = clarify::cmd_generate_clarifications(build_config(generate_overrides));
            std::cout << clarify::render_report(summary);
            return 0;
        }
        if (responsiveness->parsed()) {
            const auto summary = clarify::cmd_responsiveness(build_config(responsiveness_overrides));
            std::cout << clarify::render_report(summary);
            return 0;
        }
        if (when->parsed()) {
            const auto summary = clarify::cmd_when_to_clarify(build_config(when_overrides));
            std::cout << clarify::render_report(summary);
            return 0;
        }
        if (report->parsed()) {
            std::cout << clarify::cmd_report(report_path);
            return 0;
        }
    } catch (const clarify::TransportError& e) {
        std::cerr << "transport failure: " << e.what() << "\n";
        return 2;
    } catch (const clarify::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
