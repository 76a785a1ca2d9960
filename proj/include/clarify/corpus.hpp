#pragma once

#include <array>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "clarify/errors.hpp"
#include "clarify/metrics.hpp"
#include "clarify/types.hpp"

namespace clarify {

// ---- interpretations -------------------------------------------------------

struct QaOutput {
    std::vector<std::string> answers;
};

struct NliOutput {
    EntailmentLabel label = EntailmentLabel::neutral;
};

struct MtOutput {
    std::string translation;
};

using InterpretationOutput = std::variant<QaOutput, NliOutput, MtOutput>;

// One feasible reading of an ambiguous input: a disambiguated rewrite
// (QA/NLI) or a disambiguating context sentence (MT), plus its task output.
struct Interpretation {
    int index = 0;
    std::string text;
    InterpretationOutput output;

    const std::vector<std::string>& answers() const {
        if (const auto* qa = std::get_if<QaOutput>(&output)) return qa->answers;
        throw Error("interpretation has no QA output");
    }
    EntailmentLabel label() const {
        if (const auto* nli = std::get_if<NliOutput>(&output)) return nli->label;
        throw Error("interpretation has no NLI output");
    }
    const std::string& translation() const {
        if (const auto* mt = std::get_if<MtOutput>(&output)) return mt->translation;
        throw Error("interpretation has no MT output");
    }
};

struct ClarifyingExchange {
    std::string question;
    std::vector<std::string> answers;  // one per interpretation, same order
};

struct AmbiguousExample {
    std::string id;
    TaskKind task = TaskKind::qa;
    std::string input;
    std::vector<Interpretation> interpretations;
    std::optional<int> gold_index;
    bool is_ambiguous = false;
    std::optional<ClarifyingExchange> exchange;

    std::size_t k() const { return interpretations.size(); }
    const Interpretation& gold() const {
        if (!gold_index) throw MissingGoldError("example '" + id + "' has no sampled intent");
        return interpretations.at(static_cast<std::size_t>(*gold_index));
    }
};

// ---- intent weighting ------------------------------------------------------

enum class WeightMode { sampled, uniform };

inline const char* to_string(WeightMode mode) {
    return mode == WeightMode::sampled ? "sampled" : "uniform";
}

inline WeightMode weight_mode_from_string(const std::string& s) {
    if (s == "sampled") return WeightMode::sampled;
    if (s == "uniform") return WeightMode::uniform;
    throw ConfigError("unknown weighting mode '" + s + "'");
}

struct IntentWeighting {
    WeightMode mode = WeightMode::uniform;
    std::vector<double> weights;  // per interpretation, sums to 1
};

// Sampled weighting puts all mass on the annotated intent; uniform weighs
// every interpretation equally. MT has no sampled intents.
inline IntentWeighting weight_intents(const AmbiguousExample& example, WeightMode mode) {
    if (example.task == TaskKind::mt && mode == WeightMode::sampled) {
        throw ModeUnsupportedError("MT examples only support uniform weighting");
    }
    const std::size_t k = example.k();
    if (k == 0) throw Error("example '" + example.id + "' has no interpretations");
    IntentWeighting weighting;
    weighting.mode = mode;
    if (mode == WeightMode::sampled) {
        if (!example.gold_index) {
            throw MissingGoldError("sampled weighting needs a gold intent for '" + example.id + "'");
        }
        weighting.weights.assign(k, 0.0);
        weighting.weights[static_cast<std::size_t>(*example.gold_index)] = 1.0;
    } else {
        weighting.weights.assign(k, 1.0 / static_cast<double>(k));
    }
    return weighting;
}

// ---- intent matching -------------------------------------------------------

struct IntentMatch {
    enum class Status { matched, no_match, multi_match };
    Status status = Status::no_match;
    int index = -1;

    bool matched() const { return status == Status::matched; }
};

// Maps sampled gold answers onto the interpretation whose answer set shares a
// normalized answer string. Zero or multiple hits mean the example is
// dropped by the caller.
inline IntentMatch match_qa_intent(const std::vector<std::string>& source_answers,
                                   const std::vector<Interpretation>& interpretations) {
    if (interpretations.size() < 2) throw Error("match_qa_intent needs >= 2 interpretations");
    std::set<std::string> source;
    for (const auto& a : source_answers) source.insert(normalize_answer(a));
    IntentMatch match;
    int hits = 0;
    for (std::size_t i = 0; i < interpretations.size(); ++i) {
        const auto& answers = interpretations[i].answers();
        if (answers.empty()) throw Error("interpretation with empty answer list");
        bool hit = false;
        for (const auto& a : answers) {
            if (source.count(normalize_answer(a))) {
                hit = true;
                break;
            }
        }
        if (hit) {
            ++hits;
            match.index = static_cast<int>(i);
        }
    }
    if (hits == 1) {
        match.status = IntentMatch::Status::matched;
    } else {
        match.status = hits == 0 ? IntentMatch::Status::no_match : IntentMatch::Status::multi_match;
        match.index = -1;
    }
    return match;
}

// Same contract for NLI: the interpretation whose label agrees with the
// label annotators gave the ambiguous input.
inline IntentMatch match_nli_intent(EntailmentLabel ambiguous_label,
                                    const std::vector<EntailmentLabel>& interpretation_labels) {
    if (interpretation_labels.size() < 2) throw Error("match_nli_intent needs >= 2 labels");
    IntentMatch match;
    int hits = 0;
    for (std::size_t i = 0; i < interpretation_labels.size(); ++i) {
        if (interpretation_labels[i] == ambiguous_label) {
            ++hits;
            match.index = static_cast<int>(i);
        }
    }
    if (hits == 1) {
        match.status = IntentMatch::Status::matched;
    } else {
        match.status = hits == 0 ? IntentMatch::Status::no_match : IntentMatch::Status::multi_match;
        match.index = -1;
    }
    return match;
}

// ---- unified JSONL serialization -------------------------------------------

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& record, const char* field,
                                           long line) {
    auto it = record.find(field);
    if (it == record.end()) throw SchemaError("missing field", line, field);
    return *it;
}

}  // namespace detail

inline nlohmann::json interpretation_to_json(const Interpretation& interp, TaskKind task) {
    nlohmann::json j;
    j[task == TaskKind::mt ? "context" : "disambiguated_input"] = interp.text;
    nlohmann::json out;
    switch (task) {
        case TaskKind::qa: out["answers"] = std::get<QaOutput>(interp.output).answers; break;
        case TaskKind::nli: out["label"] = to_string(std::get<NliOutput>(interp.output).label); break;
        case TaskKind::mt: out["translation"] = std::get<MtOutput>(interp.output).translation; break;
    }
    j["output"] = out;
    return j;
}

inline Interpretation interpretation_from_json(const nlohmann::json& j, TaskKind task, int index,
                                               long line) {
    Interpretation interp;
    interp.index = index;
    const char* text_field = task == TaskKind::mt ? "context" : "disambiguated_input";
    interp.text = detail::require_field(j, text_field, line).get<std::string>();
    const auto& out = detail::require_field(j, "output", line);
    switch (task) {
        case TaskKind::qa: {
            QaOutput qa;
            qa.answers = detail::require_field(out, "answers", line).get<std::vector<std::string>>();
            if (qa.answers.empty()) throw SchemaError("empty answer list", line, "output.answers");
            interp.output = qa;
            break;
        }
        case TaskKind::nli: {
            NliOutput nli;
            nli.label = entailment_label_from_string(
                detail::require_field(out, "label", line).get<std::string>());
            interp.output = nli;
            break;
        }
        case TaskKind::mt: {
            MtOutput mt;
            mt.translation = detail::require_field(out, "translation", line).get<std::string>();
            interp.output = mt;
            break;
        }
    }
    return interp;
}

inline nlohmann::json example_to_json(const AmbiguousExample& example) {
    nlohmann::json j;
    j["id"] = example.id;
    j["task"] = to_string(example.task);
    j["input"] = example.input;
    j["is_ambiguous"] = example.is_ambiguous;
    if (example.gold_index) j["gold_index"] = *example.gold_index;
    nlohmann::json interps = nlohmann::json::array();
    for (const auto& interp : example.interpretations) {
        interps.push_back(interpretation_to_json(interp, example.task));
    }
    j["interpretations"] = interps;
    if (example.exchange) {
        j["exchange"] = {{"question", example.exchange->question},
                         {"answers", example.exchange->answers}};
    }
    return j;
}

inline AmbiguousExample example_from_json(const nlohmann::json& record, TaskKind task,
                                          long line = -1) {
    AmbiguousExample example;
    example.id = detail::require_field(record, "id", line).get<std::string>();
    example.task = task;
    if (record.contains("task")) {
        const auto recorded = task_from_string(record["task"].get<std::string>());
        if (recorded != task) throw SchemaError("record task does not match corpus task", line, "task");
    }
    example.input = detail::require_field(record, "input", line).get<std::string>();
    const auto& interps = detail::require_field(record, "interpretations", line);
    if (!interps.is_array() || interps.empty()) {
        throw SchemaError("interpretations must be a non-empty array", line, "interpretations");
    }
    int index = 0;
    for (const auto& ij : interps) {
        example.interpretations.push_back(interpretation_from_json(ij, task, index++, line));
    }
    example.is_ambiguous =
        detail::require_field(record, "is_ambiguous", line).get<bool>();
    if (example.is_ambiguous != (example.k() >= 2)) {
        throw SchemaError("is_ambiguous inconsistent with interpretation count", line,
                          "is_ambiguous");
    }
    if (record.contains("gold_index")) {
        const int gold = record["gold_index"].get<int>();
        if (gold < 0 || gold >= static_cast<int>(example.k())) {
            throw SchemaError("gold_index out of range", line, "gold_index");
        }
        example.gold_index = gold;
    }
    if (!example.is_ambiguous) {
        if (example.gold_index && *example.gold_index != 0) {
            throw SchemaError("unambiguous example with nonzero gold_index", line, "gold_index");
        }
        example.gold_index = 0;
    }
    if (record.contains("exchange") && !record["exchange"].is_null()) {
        const auto& ex = record["exchange"];
        ClarifyingExchange exchange;
        exchange.question = detail::require_field(ex, "question", line).get<std::string>();
        exchange.answers = detail::require_field(ex, "answers", line).get<std::vector<std::string>>();
        if (exchange.question.empty()) throw SchemaError("empty clarifying question", line, "exchange");
        if (exchange.answers.size() != example.k()) {
            throw SchemaError("exchange answers do not match interpretation count", line, "exchange");
        }
        example.exchange = exchange;
    }
    return example;
}

// Loads the unified one-object-per-line corpus. Records come back in file
// order; ids must be unique.
inline std::vector<AmbiguousExample> load_corpus(const std::string& path, TaskKind task) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus file '" + path + "'");
    std::vector<AmbiguousExample> examples;
    std::set<std::string> seen_ids;
    std::string line_text;
    long line = 0;
    while (std::getline(in, line_text)) {
        ++line;
        if (line_text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line_text);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(std::string("invalid JSON: ") + e.what(), line);
        }
        auto example = example_from_json(record, task, line);
        if (!seen_ids.insert(example.id).second) throw DuplicateIdError(example.id);
        examples.push_back(std::move(example));
    }
    return examples;
}

inline void save_corpus(const std::string& path, const std::vector<AmbiguousExample>& examples) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write corpus file '" + path + "'");
    for (const auto& example : examples) {
        out << example_to_json(example).dump() << '\n';
    }
}

// ---- DiscourseMT derivation ------------------------------------------------

// One source record: an ambiguous test sentence whose translation depends on
// which of two context sentences precedes it.
struct DiscourseMtRecord {
    std::string id;
    std::string test_sentence;
    std::array<std::string, 2> contexts;
    std::array<std::string, 2> translations;          // of the test sentence
    std::array<std::string, 2> context_translations;  // optional, may be empty
};

// Emits 1 ambiguous example (the bare test sentence, both readings) plus 2
// unambiguous ones (each context sentence on its own).
inline std::vector<AmbiguousExample> derive_mt_examples(const DiscourseMtRecord& record) {
    if (record.test_sentence.empty()) throw SchemaError("missing test sentence");
    for (const auto& ctx : record.contexts) {
        if (ctx.empty()) throw SchemaError("missing context sentence");
    }
    for (const auto& trans : record.translations) {
        if (trans.empty()) throw SchemaError("missing target translation");
    }

    std::vector<AmbiguousExample> out;

    AmbiguousExample ambiguous;
    ambiguous.id = record.id;
    ambiguous.task = TaskKind::mt;
    ambiguous.input = record.test_sentence;
    ambiguous.is_ambiguous = true;
    for (int i = 0; i < 2; ++i) {
        Interpretation interp;
        interp.index = i;
        interp.text = record.contexts[static_cast<std::size_t>(i)];
        interp.output = MtOutput{record.translations[static_cast<std::size_t>(i)]};
        ambiguous.interpretations.push_back(std::move(interp));
    }
    out.push_back(std::move(ambiguous));

    for (int i = 0; i < 2; ++i) {
        AmbiguousExample context_example;
        context_example.id = record.id + ":ctx" + std::to_string(i);
        context_example.task = TaskKind::mt;
        context_example.input = record.contexts[static_cast<std::size_t>(i)];
        context_example.is_ambiguous = false;
        context_example.gold_index = 0;
        Interpretation interp;
        interp.index = 0;
        interp.text = record.contexts[static_cast<std::size_t>(i)];
        interp.output = MtOutput{record.context_translations[static_cast<std::size_t>(i)]};
        context_example.interpretations.push_back(std::move(interp));
        out.push_back(std::move(context_example));
    }
    return out;
}

}  // namespace clarify
