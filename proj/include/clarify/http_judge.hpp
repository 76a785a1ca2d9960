#pragma once

// Entailment judge backed by an HTTP classifier service. The service takes
// a JSON body {"premise": ..., "hypothesis": ...} and answers with
// {"label": "entailment" | "neutral" | "contradiction"}.

#include <memory>
#include <string>
#include <utility>

#include <clarify/equivalence.hpp>
#include <clarify/errors.hpp>
#include <clarify/types.hpp>

#include <httplib.h>
#include <json.hpp>

namespace clarify {

struct HttpJudgeConfig {
    std::string base_url;        // e.g. http://127.0.0.1:9090
    std::string path = "/judge";
    int timeout_seconds = 60;
};

inline void from_json_config(const nlohmann::json& j, HttpJudgeConfig& config) {
    config.base_url = j.at("base_url").get<std::string>();
    config.path = j.value("path", config.path);
    config.timeout_seconds = j.value("timeout_seconds", 60);
}

class HttpJudge final : public EntailmentJudge {
public:
    explicit HttpJudge(HttpJudgeConfig config) : config_(std::move(config)) {
        if (config_.base_url.empty()) throw ConfigError("http judge needs a base_url");
    }

    std::string id() const override { return "http:" + config_.base_url + config_.path; }

    EntailmentLabel judge(const std::string& premise, const std::string& hypothesis) override {
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);

        nlohmann::json body{{"premise", premise}, {"hypothesis", hypothesis}};
        auto res = client.Post(config_.path, body.dump(), "application/json");
        if (!res) {
            throw TransportError("judge request to " + config_.base_url +
                                 " failed: " + httplib::to_string(res.error()));
        }
        if (res->status < 200 || res->status >= 300) {
            throw BackendError("judge returned status " + std::to_string(res->status),
                               res->status, res->body);
        }
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("judge sent unparseable JSON: ") + e.what(),
                               res->status, res->body);
        }
        if (!parsed.contains("label")) {
            throw BackendError("judge response lacks a label", res->status, res->body);
        }
        return entailment_label_from_string(parsed.at("label").get<std::string>());
    }

private:
    HttpJudgeConfig config_;
};

}  // namespace clarify
