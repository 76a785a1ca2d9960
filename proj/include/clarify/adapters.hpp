#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "clarify/corpus.hpp"
#include "clarify/errors.hpp"

namespace clarify {

// Source adapters: read the published AmbigQA / AmbiEnt / DiscourseMT
// layouts and emit the unified corpus format. Examples that cannot be
// assigned a sampled intent are dropped and reported, not silently skipped.

struct DropRecord {
    std::string id;
    std::string reason;
};

struct AdaptResult {
    std::vector<AmbiguousExample> examples;
    std::vector<DropRecord> drops;
};

inline void write_drop_report(const std::string& path, const std::vector<DropRecord>& drops) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write drop report '" + path + "'");
    for (const auto& drop : drops) {
        out << nlohmann::json{{"id", drop.id}, {"reason", drop.reason}}.dump() << '\n';
    }
}

namespace detail {

inline std::string line_id(const std::string& source, long line, const nlohmann::json& record) {
    if (record.contains("id")) {
        const auto& id = record["id"];
        if (id.is_string()) return id.get<std::string>();
        if (id.is_number_integer()) return std::to_string(id.get<long>());
    }
    return source + ":" + std::to_string(line);
}

// Accepts either a JSON array file or one object per line.
inline std::vector<nlohmann::json> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open source file '" + path + "'");
    std::string first_line;
    std::streampos start = in.tellg();
    while (std::getline(in, first_line)) {
        auto pos = first_line.find_first_not_of(" \t\r");
        if (pos != std::string::npos) {
            if (first_line[pos] == '[') {
                in.seekg(0);
                nlohmann::json all;
                try {
                    in >> all;
                } catch (const nlohmann::json::parse_error& e) {
                    throw SchemaError(std::string("invalid JSON: ") + e.what());
                }
                return std::vector<nlohmann::json>(all.begin(), all.end());
            }
            break;
        }
        start = in.tellg();
    }
    in.clear();
    in.seekg(0);
    std::vector<nlohmann::json> records;
    std::string line_text;
    long line = 0;
    while (std::getline(in, line_text)) {
        ++line;
        if (line_text.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            records.push_back(nlohmann::json::parse(line_text));
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(std::string("invalid JSON: ") + e.what(), line);
        }
    }
    return records;
}

}  // namespace detail

// ---- AmbigQA ---------------------------------------------------------------

// Published layout: {id, question, annotations: [{type: "singleAnswer",
// answer: [...]} | {type: "multipleQAs", qaPairs: [{question, answer}]}],
// nq_answer: [...]}. The NaturalQuestions answers act as sampled intents and
// are matched against the disambiguated readings.
inline AdaptResult adapt_ambigqa(const std::string& path, const std::string& source = "ambigqa") {
    AdaptResult result;
    long line = 0;
    for (const auto& record : detail::read_records(path)) {
        ++line;
        const std::string id = detail::line_id(source, line, record);
        if (!record.contains("question") || !record.contains("annotations")) {
            result.drops.push_back({id, "missing question or annotations"});
            continue;
        }

        const nlohmann::json* multi = nullptr;
        const nlohmann::json* single = nullptr;
        for (const auto& annotation : record["annotations"]) {
            const auto type = annotation.value("type", std::string());
            if (type == "multipleQAs" && !multi) multi = &annotation;
            if (type == "singleAnswer" && !single) single = &annotation;
        }

        AmbiguousExample example;
        example.id = id;
        example.task = TaskKind::qa;
        example.input = record["question"].get<std::string>();

        if (multi && (*multi)["qaPairs"].size() >= 2) {
            int index = 0;
            for (const auto& pair : (*multi)["qaPairs"]) {
                Interpretation interp;
                interp.index = index++;
                interp.text = pair.at("question").get<std::string>();
                interp.output = QaOutput{pair.at("answer").get<std::vector<std::string>>()};
                example.interpretations.push_back(std::move(interp));
            }
            example.is_ambiguous = true;
            const auto sampled = record.value("nq_answer", std::vector<std::string>());
            if (sampled.empty()) {
                result.drops.push_back({id, "no sampled answers"});
                continue;
            }
            const auto match = match_qa_intent(sampled, example.interpretations);
            if (!match.matched()) {
                result.drops.push_back(
                    {id, match.status == IntentMatch::Status::no_match ? "no_match" : "multi_match"});
                continue;
            }
            example.gold_index = match.index;
        } else {
            // Single-answer (or degenerate one-reading) questions are the
            // unambiguous side of the corpus.
            std::vector<std::string> answers;
            if (single) {
                answers = (*single)["answer"].get<std::vector<std::string>>();
            } else if (multi) {
                answers = (*multi)["qaPairs"].at(0).at("answer").get<std::vector<std::string>>();
            }
            if (answers.empty()) {
                result.drops.push_back({id, "no answer annotation"});
                continue;
            }
            Interpretation interp;
            interp.index = 0;
            interp.text = example.input;
            interp.output = QaOutput{answers};
            example.interpretations.push_back(std::move(interp));
            example.is_ambiguous = false;
            example.gold_index = 0;
        }
        result.examples.push_back(std::move(example));
    }
    return result;
}

// ---- AmbiEnt ---------------------------------------------------------------

namespace detail {

// The ambiguous input's label: a bare "label" string, or a unanimous
// "labels" array. Disagreement yields no label and the example is dropped.
inline std::optional<EntailmentLabel> consensus_label(const nlohmann::json& record) {
    if (record.contains("label") && record["label"].is_string()) {
        return entailment_label_from_string(record["label"].get<std::string>());
    }
    if (record.contains("labels") && record["labels"].is_array() && !record["labels"].empty()) {
        std::set<std::string> distinct;
        for (const auto& l : record["labels"]) distinct.insert(l.get<std::string>());
        if (distinct.size() == 1) return entailment_label_from_string(*distinct.begin());
    }
    return std::nullopt;
}

inline bool unanimous_annotators(const nlohmann::json& record) {
    if (!record.contains("annotator_labels") || !record["annotator_labels"].is_array()) return false;
    const auto& labels = record["annotator_labels"];
    if (labels.empty()) return false;
    std::set<std::string> distinct;
    for (const auto& l : labels) distinct.insert(l.get<std::string>());
    return distinct.size() == 1;
}

}  // namespace detail

// Published layout: {id, premise, hypothesis, label | labels,
// annotator_labels?, disambiguations: [{premise, hypothesis, label}]}.
// Inputs where every annotator read the sentence the same way become
// unambiguous examples; the rest keep all readings and get a sampled intent
// by label matching. Premise and hypothesis travel as two lines of `input`.
inline AdaptResult adapt_ambient(const std::string& path, const std::string& source = "ambient") {
    AdaptResult result;
    long line = 0;
    for (const auto& record : detail::read_records(path)) {
        ++line;
        const std::string id = detail::line_id(source, line, record);
        if (!record.contains("premise") || !record.contains("hypothesis")) {
            result.drops.push_back({id, "missing premise or hypothesis"});
            continue;
        }
        AmbiguousExample example;
        example.id = id;
        example.task = TaskKind::nli;
        example.input = record["premise"].get<std::string>() + "\n" +
                        record["hypothesis"].get<std::string>();

        const auto disambiguations = record.value("disambiguations", nlohmann::json::array());
        const auto ambiguous_label = detail::consensus_label(record);

        if (detail::unanimous_annotators(record) || disambiguations.size() < 2) {
            if (!ambiguous_label) {
                result.drops.push_back({id, "label_disagreement"});
                continue;
            }
            Interpretation interp;
            interp.index = 0;
            interp.text = example.input;
            interp.output = NliOutput{*ambiguous_label};
            example.interpretations.push_back(std::move(interp));
            example.is_ambiguous = false;
            example.gold_index = 0;
        } else {
            int index = 0;
            std::vector<EntailmentLabel> labels;
            for (const auto& d : disambiguations) {
                Interpretation interp;
                interp.index = index++;
                interp.text = d.at("premise").get<std::string>() + "\n" +
                              d.at("hypothesis").get<std::string>();
                const auto label = entailment_label_from_string(d.at("label").get<std::string>());
                interp.output = NliOutput{label};
                labels.push_back(label);
                example.interpretations.push_back(std::move(interp));
            }
            example.is_ambiguous = true;
            if (!ambiguous_label) {
                result.drops.push_back({id, "label_disagreement"});
                continue;
            }
            const auto match = match_nli_intent(*ambiguous_label, labels);
            if (!match.matched()) {
                result.drops.push_back(
                    {id, match.status == IntentMatch::Status::no_match ? "no_match" : "multi_match"});
                continue;
            }
            example.gold_index = match.index;
        }
        result.examples.push_back(std::move(example));
    }
    return result;
}

// ---- DiscourseMT -----------------------------------------------------------

// Published layout mirrored as JSON: {test | src, contexts | [context1,
// context2], translations | [translation1, translation2],
// context_translations?}.
inline AdaptResult adapt_discoursemt(const std::string& path,
                                     const std::string& source = "discoursemt") {
    AdaptResult result;
    long line = 0;
    for (const auto& record : detail::read_records(path)) {
        ++line;
        const std::string id = detail::line_id(source, line, record);
        DiscourseMtRecord mt;
        mt.id = id;
        if (record.contains("test")) {
            mt.test_sentence = record["test"].get<std::string>();
        } else if (record.contains("src")) {
            mt.test_sentence = record["src"].get<std::string>();
        }
        auto read_pair = [&](const char* plural, const char* singular,
                             std::array<std::string, 2>& into) {
            if (record.contains(plural) && record[plural].is_array() &&
                record[plural].size() == 2) {
                into[0] = record[plural][0].get<std::string>();
                into[1] = record[plural][1].get<std::string>();
                return true;
            }
            const std::string one = std::string(singular) + "1";
            const std::string two = std::string(singular) + "2";
            if (record.contains(one) && record.contains(two)) {
                into[0] = record[one].get<std::string>();
                into[1] = record[two].get<std::string>();
                return true;
            }
            return false;
        };
        read_pair("contexts", "context", mt.contexts);
        read_pair("translations", "translation", mt.translations);
        read_pair("context_translations", "context_translation", mt.context_translations);
        try {
            auto derived = derive_mt_examples(mt);
            for (auto& example : derived) result.examples.push_back(std::move(example));
        } catch (const SchemaError& e) {
            result.drops.push_back({id, e.what()});
        }
    }
    return result;
}

}  // namespace clarify
