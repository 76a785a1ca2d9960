#pragma once

#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "clarify/backend.hpp"
#include "clarify/errors.hpp"
#include "clarify/types.hpp"

namespace clarify {

struct HttpBackendConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8080
    std::string model;
    std::string chat_path = "/v1/chat/completions";
    std::string completions_path = "/v1/completions";
    std::string api_key;          // empty: no Authorization header
    std::string api_key_env;      // read the key from this variable instead
    bool request_logprobs = true;
    // Scores continuations through the legacy echo endpoint, which replays
    // the prompt with per-token log-probabilities. The chat transcript is
    // flattened to plain text for it, so only enable this against servers
    // that serve /completions with echo.
    bool echo_scoring = false;
    int timeout_seconds = 120;
};

inline void from_json_config(const nlohmann::json& j, HttpBackendConfig& config) {
    config.base_url = j.at("base_url").get<std::string>();
    config.model = j.at("model").get<std::string>();
    config.chat_path = j.value("chat_path", config.chat_path);
    config.completions_path = j.value("completions_path", config.completions_path);
    config.api_key = j.value("api_key", std::string());
    config.api_key_env = j.value("api_key_env", std::string());
    config.request_logprobs = j.value("request_logprobs", true);
    config.echo_scoring = j.value("echo_scoring", false);
    config.timeout_seconds = j.value("timeout_seconds", 120);
}

// OpenAI-compatible chat completions client. Connection failures and
// retryable statuses (429, 5xx) surface as TransportError; everything else
// as BackendError with the response body attached.
class HttpBackend final : public ChatBackend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.base_url.empty()) throw ConfigError("http backend needs a base_url");
        if (config_.model.empty()) throw ConfigError("http backend needs a model");
        if (!config_.api_key_env.empty() && config_.api_key.empty()) {
            if (const char* key = std::getenv(config_.api_key_env.c_str())) {
                config_.api_key = key;
            } else {
                throw ConfigError("environment variable '" + config_.api_key_env + "' is not set");
            }
        }
    }

    std::string id() const override { return config_.model; }

    bool supports_scoring() const override { return config_.echo_scoring; }

    Completion complete(const CompletionRequest& request) override {
        nlohmann::json body;
        body["model"] = config_.model;
        body["messages"] = nlohmann::json::array();
        for (const auto& message : request.messages) {
            body["messages"].push_back(
                {{"role", to_string(message.role)}, {"content", message.content}});
        }
        body["temperature"] = request.temperature;
        body["max_tokens"] = request.max_tokens;
        body["n"] = 1;
        if (request.temperature > 0.0) {
            // keep distinct samples of one prompt distinct server-side
            body["seed"] = request.seed + static_cast<std::uint64_t>(request.sample_index);
        }
        if (config_.request_logprobs) body["logprobs"] = true;

        const auto response = post_json(config_.chat_path, body);
        try {
            const auto& choice = response.at("choices").at(0);
            Completion completion;
            completion.text = choice.at("message").at("content").get<std::string>();
            if (choice.contains("logprobs") && !choice["logprobs"].is_null() &&
                choice["logprobs"].contains("content")) {
                for (const auto& token : choice["logprobs"]["content"]) {
                    completion.token_logprobs.push_back(token.at("logprob").get<double>());
                }
            }
            return completion;
        } catch (const nlohmann::json::exception& e) {
            throw BackendError("malformed chat completion response: " + std::string(e.what()), 200,
                               response.dump());
        }
    }

    double score(const std::vector<ChatMessage>& prefix, const std::string& continuation) override {
        if (!config_.echo_scoring) {
            throw UnsupportedCapabilityError(
                "backend '" + id() + "' cannot score continuations (enable echo_scoring)");
        }
        // A continuation of a trailing assistant message extends that
        // message directly; otherwise it opens a new assistant turn.
        std::string prefix_text;
        if (!prefix.empty() && prefix.back().role == Role::assistant) {
            const std::vector<ChatMessage> head(prefix.begin(), prefix.end() - 1);
            prefix_text = flatten_transcript(head);
            prefix_text += "assistant: ";
            prefix_text += prefix.back().content;
        } else {
            prefix_text = flatten_transcript(prefix);
        }
        nlohmann::json body;
        body["model"] = config_.model;
        body["prompt"] = prefix_text + continuation;
        body["max_tokens"] = 0;
        body["echo"] = true;
        body["logprobs"] = 0;

        const auto response = post_json(config_.completions_path, body);
        try {
            const auto& logprobs = response.at("choices").at(0).at("logprobs");
            const auto& token_logprobs = logprobs.at("token_logprobs");
            const auto& offsets = logprobs.at("text_offset");
            double total = 0.0;
            for (std::size_t i = 0; i < token_logprobs.size(); ++i) {
                if (offsets.at(i).get<std::size_t>() < prefix_text.size()) continue;
                if (token_logprobs.at(i).is_null()) continue;  // first token has no logprob
                total += token_logprobs.at(i).get<double>();
            }
            return total;
        } catch (const nlohmann::json::exception& e) {
            throw BackendError("malformed echo scoring response: " + std::string(e.what()), 200,
                               response.dump());
        }
    }

private:
    nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!config_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + config_.api_key);
        }
        const auto result = client.Post(path, headers, body.dump(), "application/json");
        if (!result) {
            throw TransportError("request to " + config_.base_url + path + " failed: " +
                                 httplib::to_string(result.error()));
        }
        if (result->status == 429 || result->status >= 500) {
            throw TransportError("retryable status " + std::to_string(result->status) + " from " +
                                 path + ": " + result->body);
        }
        if (result->status != 200) {
            throw BackendError("status " + std::to_string(result->status) + " from " + path,
                               result->status, result->body);
        }
        try {
            return nlohmann::json::parse(result->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw BackendError("response from " + path + " is not JSON: " + e.what(),
                               result->status, result->body);
        }
    }

    HttpBackendConfig config_;
};

}  // namespace clarify
