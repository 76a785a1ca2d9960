#pragma once

// Run configuration shared by the CLI subcommands. A config file is a JSON
// object whose keys mirror the fields below; command-line flags override
// individual fields after the file is loaded.

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <clarify/corpus.hpp>
#include <clarify/errors.hpp>
#include <clarify/estimators.hpp>
#include <clarify/http_backend.hpp>
#include <clarify/http_judge.hpp>
#include <clarify/metrics.hpp>
#include <clarify/templates.hpp>
#include <clarify/types.hpp>

#include <json.hpp>

namespace clarify {

inline constexpr const char* kToolVersion = "1.0.0";

// Parses "major.minor.patch" with optional trailing components ignored.
inline std::tuple<int, int, int> parse_version(const std::string& text) {
    int parts[3] = {0, 0, 0};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        if (pos >= text.size()) break;
        std::size_t end = text.find('.', pos);
        std::string piece = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        try {
            parts[i] = std::stoi(piece);
        } catch (const std::exception&) {
            throw SchemaError("bad version component '" + piece + "' in '" + text + "'");
        }
        if (end == std::string::npos) { pos = text.size(); break; }
        pos = end + 1;
    }
    return {parts[0], parts[1], parts[2]};
}

inline bool version_newer(const std::string& candidate, const std::string& reference) {
    return parse_version(candidate) > parse_version(reference);
}

enum class BackendKind { mock, http };
enum class JudgeKind { exact_match, scripted, http };

inline const char* to_string(BackendKind kind) {
    return kind == BackendKind::mock ? "mock" : "http";
}

inline BackendKind backend_kind_from_string(const std::string& s) {
    if (s == "mock") return BackendKind::mock;
    if (s == "http") return BackendKind::http;
    throw SchemaError("unknown backend kind: " + s);
}

inline const char* to_string(JudgeKind kind) {
    switch (kind) {
        case JudgeKind::exact_match: return "exact_match";
        case JudgeKind::scripted: return "scripted";
        case JudgeKind::http: return "http";
    }
    return "?";
}

inline JudgeKind judge_kind_from_string(const std::string& s) {
    if (s == "exact_match") return JudgeKind::exact_match;
    if (s == "scripted") return JudgeKind::scripted;
    if (s == "http") return JudgeKind::http;
    throw SchemaError("unknown judge kind: " + s);
}

struct RunConfig {
    TaskKind task = TaskKind::qa;
    std::string corpus_path;

    BackendKind backend = BackendKind::mock;
    std::string mock_script_path;
    std::optional<HttpBackendConfig> http_backend;

    JudgeKind judge = JudgeKind::exact_match;
    std::string judge_script_path;
    std::optional<HttpJudgeConfig> http_judge;

    std::vector<std::string> estimators = all_methods();
    int samples = 10;
    double temperature = 0.5;
    std::optional<std::uint64_t> seed;
    int exemplar_count = 2;
    int max_tokens = 256;
    int selfask_fallback_samples = 20;
    bool allow_selfask_fallback = true;

    std::string templates_dir;  // empty: use the built-in templates
    std::vector<PromptVariant> variants = {PromptVariant::direct, PromptVariant::follow,
                                           PromptVariant::disambig};
    std::vector<WeightMode> weightings;  // empty: task default
    std::vector<double> budgets = {10.0, 20.0, 30.0};
    BudgetPool pool = BudgetPool::full;

    std::string cache_dir;  // empty: <out_dir>/cache
    std::string out_dir = "clarify_out";
    int max_concurrency = 4;
    int max_retries = 3;

    std::vector<WeightMode> effective_weightings() const {
        if (!weightings.empty()) return weightings;
        if (task == TaskKind::mt) return {WeightMode::uniform};
        return {WeightMode::sampled};
    }

    EstimatorConfig estimator_config() const {
        EstimatorConfig config;
        config.samples = samples;
        config.temperature = temperature;
        config.seed = seed.value_or(0);
        config.max_tokens = max_tokens;
        config.selfask_fallback_samples = selfask_fallback_samples;
        config.allow_selfask_fallback = allow_selfask_fallback;
        return config;
    }

    void validate() const {
        if (corpus_path.empty()) throw ConfigError("corpus path is required");
        if (out_dir.empty()) throw ConfigError("output directory is required");
        if (!seed.has_value()) throw ConfigError("seed is required for reproducible runs");
        if (backend == BackendKind::mock && mock_script_path.empty()) {
            throw ConfigError("mock backend needs a mock_script path");
        }
        if (backend == BackendKind::http && !http_backend.has_value()) {
            throw ConfigError("http backend needs an http_backend config block");
        }
        if (judge == JudgeKind::scripted && judge_script_path.empty()) {
            throw ConfigError("scripted judge needs a judge_script path");
        }
        if (judge == JudgeKind::http && !http_judge.has_value()) {
            throw ConfigError("http judge needs an http_judge config block");
        }
        if (estimators.empty()) throw ConfigError("at least one estimator is required");
        std::set<std::string> known(all_methods().begin(), all_methods().end());
        for (const auto& name : estimators) {
            if (!known.count(name)) throw ConfigError("unknown estimator: " + name);
        }
        if (variants.empty()) throw ConfigError("at least one prompt variant is required");
        for (PromptVariant variant : variants) {
            if (variant != PromptVariant::direct && variant != PromptVariant::follow &&
                variant != PromptVariant::disambig) {
                throw ConfigError(std::string("variant not usable for evaluation: ") +
                                  to_string(variant));
            }
        }
        for (WeightMode mode : weightings) {
            if (task == TaskKind::mt && mode == WeightMode::sampled) {
                throw ConfigError("translation corpora carry no answer counts to sample from");
            }
        }
        if (budgets.empty()) throw ConfigError("at least one budget is required");
        for (double b : budgets) {
            if (b < 0.0 || b > 100.0) {
                throw ConfigError("budget must lie in [0, 100], got " + std::to_string(b));
            }
        }
        if (exemplar_count < 0) throw ConfigError("exemplar count must be >= 0");
        if (max_concurrency < 1) throw ConfigError("max_concurrency must be >= 1");
        if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
        estimator_config().validate();
    }

    nlohmann::json to_json() const {
        nlohmann::json j{
            {"task", to_string(task)},
            {"corpus", corpus_path},
            {"backend", to_string(backend)},
            {"judge", to_string(judge)},
            {"estimators", estimators},
            {"samples", samples},
            {"temperature", temperature},
            {"exemplars", exemplar_count},
            {"max_tokens", max_tokens},
            {"selfask_fallback_samples", selfask_fallback_samples},
            {"allow_selfask_fallback", allow_selfask_fallback},
            {"budgets", budgets},
            {"pool", to_string(pool)},
            {"out", out_dir},
            {"max_concurrency", max_concurrency},
            {"max_retries", max_retries},
        };
        if (seed.has_value()) j["seed"] = *seed;
        if (!mock_script_path.empty()) j["mock_script"] = mock_script_path;
        if (!judge_script_path.empty()) j["judge_script"] = judge_script_path;
        if (!templates_dir.empty()) j["templates"] = templates_dir;
        if (!cache_dir.empty()) j["cache_dir"] = cache_dir;
        std::vector<std::string> variant_names;
        for (PromptVariant v : variants) variant_names.push_back(to_string(v));
        j["variants"] = variant_names;
        std::vector<std::string> weighting_names;
        for (WeightMode mode : effective_weightings()) weighting_names.push_back(to_string(mode));
        j["weightings"] = weighting_names;
        return j;
    }

    static RunConfig from_json(const nlohmann::json& j) {
        if (!j.is_object()) throw SchemaError("run config must be a JSON object");
        static const std::set<std::string> known_keys{
            "task",          "corpus",      "backend",        "mock_script",
            "http_backend",  "judge",       "judge_script",   "http_judge",
            "estimators",    "samples",     "temperature",    "seed",
            "exemplars",     "max_tokens",  "selfask_fallback_samples",
            "allow_selfask_fallback",       "templates",      "variants",
            "weightings",    "budgets",     "pool",           "cache_dir",
            "out",           "max_concurrency",               "max_retries",
        };
        for (const auto& [key, value] : j.items()) {
            (void)value;
            if (!known_keys.count(key)) throw ConfigError("unknown config key: " + key);
        }

        RunConfig config;
        if (j.contains("task")) config.task = task_from_string(j.at("task").get<std::string>());
        config.corpus_path = j.value("corpus", std::string());
        if (j.contains("backend")) {
            config.backend = backend_kind_from_string(j.at("backend").get<std::string>());
        }
        config.mock_script_path = j.value("mock_script", std::string());
        if (j.contains("http_backend")) {
            HttpBackendConfig backend_config;
            from_json_config(j.at("http_backend"), backend_config);
            config.http_backend = backend_config;
        }
        if (j.contains("judge")) {
            config.judge = judge_kind_from_string(j.at("judge").get<std::string>());
        }
        config.judge_script_path = j.value("judge_script", std::string());
        if (j.contains("http_judge")) {
            HttpJudgeConfig judge_config;
            from_json_config(j.at("http_judge"), judge_config);
            config.http_judge = judge_config;
        }
        if (j.contains("estimators")) {
            config.estimators = j.at("estimators").get<std::vector<std::string>>();
        }
        config.samples = j.value("samples", config.samples);
        config.temperature = j.value("temperature", config.temperature);
        if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
        config.exemplar_count = j.value("exemplars", config.exemplar_count);
        config.max_tokens = j.value("max_tokens", config.max_tokens);
        config.selfask_fallback_samples =
            j.value("selfask_fallback_samples", config.selfask_fallback_samples);
        config.allow_selfask_fallback =
            j.value("allow_selfask_fallback", config.allow_selfask_fallback);
        config.templates_dir = j.value("templates", std::string());
        if (j.contains("variants")) {
            config.variants.clear();
            for (const auto& name : j.at("variants")) {
                config.variants.push_back(prompt_variant_from_string(name.get<std::string>()));
            }
        }
        if (j.contains("weightings")) {
            config.weightings.clear();
            for (const auto& name : j.at("weightings")) {
                config.weightings.push_back(weight_mode_from_string(name.get<std::string>()));
            }
        }
        if (j.contains("budgets")) config.budgets = j.at("budgets").get<std::vector<double>>();
        if (j.contains("pool")) {
            config.pool = budget_pool_from_string(j.at("pool").get<std::string>());
        }
        config.cache_dir = j.value("cache_dir", std::string());
        config.out_dir = j.value("out", config.out_dir);
        config.max_concurrency = j.value("max_concurrency", config.max_concurrency);
        config.max_retries = j.value("max_retries", config.max_retries);
        return config;
    }

    static RunConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
        }
        return from_json(j);
    }
};

}  // namespace clarify
