#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "clarify/errors.hpp"

namespace clarify {

// ---- tasks -----------------------------------------------------------------

enum class TaskKind { qa, nli, mt };

inline const char* to_string(TaskKind task) {
    switch (task) {
        case TaskKind::qa: return "qa";
        case TaskKind::nli: return "nli";
        case TaskKind::mt: return "mt";
    }
    return "?";
}

inline TaskKind task_from_string(const std::string& s) {
    if (s == "qa") return TaskKind::qa;
    if (s == "nli") return TaskKind::nli;
    if (s == "mt") return TaskKind::mt;
    throw SchemaError("unknown task '" + s + "'");
}

// ---- entailment ------------------------------------------------------------

// Three-way verdict, used both as the NLI task label and as the output of
// the entailment judge.
enum class EntailmentLabel { entailment, neutral, contradiction };

inline const char* to_string(EntailmentLabel label) {
    switch (label) {
        case EntailmentLabel::entailment: return "entailment";
        case EntailmentLabel::neutral: return "neutral";
        case EntailmentLabel::contradiction: return "contradiction";
    }
    return "?";
}

inline EntailmentLabel entailment_label_from_string(const std::string& s) {
    if (s == "entailment") return EntailmentLabel::entailment;
    if (s == "neutral") return EntailmentLabel::neutral;
    if (s == "contradiction") return EntailmentLabel::contradiction;
    throw SchemaError("unknown entailment label '" + s + "'");
}

// ---- chat messages ---------------------------------------------------------

enum class Role { system, user, assistant };

inline const char* to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "?";
}

inline Role role_from_string(const std::string& s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw SchemaError("unknown role '" + s + "'");
}

struct ChatMessage {
    Role role;
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline ChatMessage system_msg(std::string content) { return {Role::system, std::move(content)}; }
inline ChatMessage user_msg(std::string content) { return {Role::user, std::move(content)}; }
inline ChatMessage assistant_msg(std::string content) { return {Role::assistant, std::move(content)}; }

// Canonical textual transcript of a message list. Used for mock-script
// matching and for flattening chat prompts onto text-completion endpoints.
inline std::string flatten_transcript(const std::vector<ChatMessage>& messages) {
    std::string out;
    for (const auto& m : messages) {
        out += to_string(m.role);
        out += ": ";
        out += m.content;
        out += '\n';
    }
    return out;
}

// ---- completions -----------------------------------------------------------

struct CompletionRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;  // 0 means greedy
    int max_tokens = 256;
    std::uint64_t seed = 0;
    int sample_index = 0;
};

struct Completion {
    std::string text;
    std::vector<double> token_logprobs;  // natural log, one per generated token

    double sum_logprob() const {
        double s = 0.0;
        for (double lp : token_logprobs) s += lp;
        return s;
    }

    friend bool operator==(const Completion&, const Completion&) = default;
};

}  // namespace clarify
