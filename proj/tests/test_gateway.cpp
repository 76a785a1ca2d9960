#include "clarify/gateway.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "clarify/http_backend.hpp"
#include "clarify/mock_backend.hpp"

using namespace clarify;

namespace {

nlohmann::json pool_script() {
    return nlohmann::json::parse(R"({
        "id": "mock-pool",
        "default_token_logprob": -0.25,
        "rules": [
            {
                "contains": "dragon ball",
                "pool": [
                    {"text": "July 5, 2015", "count": 6},
                    {"text": "January 7, 2017", "count": 4}
                ]
            },
            {"text": "fallback answer"}
        ]
    })");
}

std::vector<ChatMessage> dragon_messages() {
    return {system_msg("Answer the question."),
            user_msg("Question: When does the new dragon ball z series come out?")};
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "clarify_gateway_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

GatewayOptions fast_options(std::string cache_dir = {}) {
    GatewayOptions options;
    options.cache_dir = std::move(cache_dir);
    options.retry_base_delay = std::chrono::milliseconds(1);
    return options;
}

// Wraps a backend with an artificial delay so concurrent identical requests
// reliably overlap in flight.
class SlowBackend final : public ChatBackend {
public:
    explicit SlowBackend(std::shared_ptr<ScriptedBackend> inner) : inner_(std::move(inner)) {}
    std::string id() const override { return inner_->id(); }
    bool supports_scoring() const override { return inner_->supports_scoring(); }
    Completion complete(const CompletionRequest& request) override {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        return inner_->complete(request);
    }
    double score(const std::vector<ChatMessage>& prefix, const std::string& cont) override {
        return inner_->score(prefix, cont);
    }

private:
    std::shared_ptr<ScriptedBackend> inner_;
};

}  // namespace

TEST_CASE("greedy requests on a pool return the most frequent entry") {
    auto backend = std::make_shared<ScriptedBackend>(pool_script());
    ChatGateway gateway(backend, fast_options());
    const auto completion = gateway.greedy_complete(dragon_messages());
    CHECK(completion.text == "July 5, 2015");
    // three whitespace tokens at the default logprob
    CHECK(completion.token_logprobs == std::vector<double>{-0.25, -0.25, -0.25});
    CHECK(completion.sum_logprob() == Catch::Approx(-0.75));
}

TEST_CASE("unmatched requests fall through to the unconditional rule") {
    auto backend = std::make_shared<ScriptedBackend>(pool_script());
    ChatGateway gateway(backend, fast_options());
    const auto completion = gateway.greedy_complete({user_msg("something else entirely")});
    CHECK(completion.text == "fallback answer");
}

TEST_CASE("a script with no matching rule reports the transcript") {
    auto backend = std::make_shared<ScriptedBackend>(nlohmann::json::parse(
        R"({"id": "m", "rules": [{"contains": "never", "text": "x"}]})"));
    ChatGateway gateway(backend, fast_options());
    try {
        gateway.greedy_complete({user_msg("hello")});
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.body.find("user: hello") != std::string::npos);
    }
}

TEST_CASE("mock scripts are validated on load") {
    CHECK_THROWS_AS(ScriptedBackend(nlohmann::json::parse(R"({"rules": 5})")), ConfigError);
    CHECK_THROWS_AS(
        ScriptedBackend(nlohmann::json::parse(
            R"({"rules": [{"text": "x", "token_logprobs": [0.5]}]})")),
        ConfigError);
    CHECK_THROWS_AS(
        ScriptedBackend(nlohmann::json::parse(
            R"({"rules": [{"text": "x", "pool": [{"text": "y"}]}]})")),
        ConfigError);
    CHECK_THROWS_AS(
        ScriptedBackend(nlohmann::json::parse(
            R"({"rules": [{"pool": [{"text": "y", "count": 0}]}]})")),
        ConfigError);
    CHECK_THROWS_AS(
        ScriptedBackend(nlohmann::json::parse(R"({"default_token_logprob": 0.1, "rules": []})")),
        ConfigError);
}

TEST_CASE("sampling reproduces pool counts exactly") {
    auto backend = std::make_shared<ScriptedBackend>(pool_script());
    ChatGateway gateway(backend, fast_options());
    const auto samples = gateway.sample_completions(dragon_messages(), 10, 0.5, 12345);
    REQUIRE(samples.size() == 10);
    std::map<std::string, int> counts;
    for (const auto& s : samples) ++counts[s.text];
    CHECK(counts["July 5, 2015"] == 6);
    CHECK(counts["January 7, 2017"] == 4);
}

TEST_CASE("sampling order depends on the seed, frequencies do not") {
    auto backend = std::make_shared<ScriptedBackend>(pool_script());
    ChatGateway gateway(backend, fast_options());
    auto texts = [&](std::uint64_t seed) {
        std::vector<std::string> t;
        for (const auto& s : gateway.sample_completions(dragon_messages(), 10, 0.5, seed)) {
            t.push_back(s.text);
        }
        return t;
    };
    const auto a = texts(1);
    const auto b = texts(2);
    CHECK(a != b);  // a conservative pair; identical permutations are astronomically unlikely
    for (const auto& run : {a, b}) {
        CHECK(std::count(run.begin(), run.end(), "July 5, 2015") == 6);
    }
    CHECK(texts(1) == a);  // same seed, same order
}

TEST_CASE("scoring uses scripted continuations with a per-token default") {
    auto backend = std::make_shared<ScriptedBackend>(nlohmann::json::parse(R"({
        "id": "m",
        "default_token_logprob": -0.5,
        "rules": [
            {
                "contains": "Needed Here?",
                "continuations": {" No": -0.105, " Yes": [-1.0, -0.2]}
            },
            {"text": "unused"}
        ]
    })"));
    ChatGateway gateway(backend, fast_options());
    const std::vector<ChatMessage> prefix = {assistant_msg("Is a Follow-Up Question Needed Here?")};
    CHECK(gateway.score_continuation(prefix, " No") == Catch::Approx(-0.105));
    CHECK(gateway.score_continuation(prefix, " Yes") == Catch::Approx(-1.2));
    // unscripted continuation: two tokens at the default
    CHECK(gateway.score_continuation(prefix, " Maybe so") == Catch::Approx(-1.0));
    // empty continuation scores zero without a backend call
    CHECK(gateway.score_continuation(prefix, "") == 0.0);
    CHECK(backend->score_calls() == 3);
}

TEST_CASE("scoring can be disabled by the script") {
    auto backend = std::make_shared<ScriptedBackend>(
        nlohmann::json::parse(R"({"supports_scoring": false, "rules": [{"text": "x"}]})"));
    ChatGateway gateway(backend, fast_options());
    CHECK_FALSE(gateway.supports_scoring());
    CHECK_THROWS_AS(gateway.score_continuation({user_msg("p")}, " No"),
                    UnsupportedCapabilityError);
}

TEST_CASE("file cache eliminates repeat backend calls across gateways") {
    const auto dir = fresh_dir("warm");
    auto backend = std::make_shared<ScriptedBackend>(pool_script());
    {
        ChatGateway gateway(backend, fast_options(dir.string()));
        gateway.greedy_complete(dragon_messages());
        gateway.greedy_complete(dragon_messages());
        CHECK(backend->complete_calls() == 1);
        CHECK(gateway.cache_hits() == 1);
    }
    {
        ChatGateway gateway(backend, fast_options(dir.string()));
        const auto completion = gateway.greedy_complete(dragon_messages());
        CHECK(completion.text == "July 5, 2015");
        CHECK(backend->complete_calls() == 1);  // warm start, no new calls
        CHECK(gateway.cache_hits() == 1);
    }
}

TEST_CASE("cache entries are audited against their stored request") {
    const auto dir = fresh_dir("corrupt");
    auto backend = std::make_shared<ScriptedBackend>(pool_script());
    {
        ChatGateway gateway(backend, fast_options(dir.string()));
        gateway.greedy_complete(dragon_messages());
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::ofstream out(entry.path());
        out << "{ definitely not json";
    }
    ChatGateway gateway(backend, fast_options(dir.string()));
    CHECK_THROWS_AS(gateway.greedy_complete(dragon_messages()), CacheCorruptionError);
}

TEST_CASE("transient failures are retried with backoff") {
    auto script = pool_script();
    script["rules"][0]["fail_first"] = 2;
    auto backend = std::make_shared<ScriptedBackend>(script);
    ChatGateway gateway(backend, fast_options());
    const auto completion = gateway.greedy_complete(dragon_messages());
    CHECK(completion.text == "July 5, 2015");
    CHECK(backend->complete_calls() == 3);  // two failures, one success
}

TEST_CASE("retries give up after the configured attempts") {
    auto script = pool_script();
    script["rules"][0]["fail_first"] = 10;
    auto backend = std::make_shared<ScriptedBackend>(script);
    auto options = fast_options();
    options.max_retries = 1;
    ChatGateway gateway(backend, options);
    CHECK_THROWS_AS(gateway.greedy_complete(dragon_messages()), TransportError);
    CHECK(backend->complete_calls() == 2);
}

TEST_CASE("multi-sample failures report the completed prefix") {
    auto script = pool_script();
    script["rules"][0]["fail_sample_indices"] = {3};
    auto backend = std::make_shared<ScriptedBackend>(script);
    auto options = fast_options();
    options.max_retries = 0;
    ChatGateway gateway(backend, options);
    try {
        gateway.sample_completions(dragon_messages(), 10, 0.5, 7);
        FAIL("expected PartialFailureError");
    } catch (const PartialFailureError& e) {
        CHECK(e.failed_index == 3);
        CHECK(e.completed.size() == 3);
    }
}

TEST_CASE("concurrent identical requests reach the backend once") {
    auto scripted = std::make_shared<ScriptedBackend>(pool_script());
    auto backend = std::make_shared<SlowBackend>(scripted);
    auto options = fast_options();
    options.max_concurrency = 8;
    ChatGateway gateway(backend, options);
    std::vector<std::thread> threads;
    std::vector<std::string> results(8);
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back(
            [&, i] { results[static_cast<std::size_t>(i)] = gateway.greedy_complete(dragon_messages()).text; });
    }
    for (auto& t : threads) t.join();
    CHECK(scripted->complete_calls() == 1);
    for (const auto& r : results) CHECK(r == "July 5, 2015");
}

TEST_CASE("results are independent of the concurrency cap") {
    auto run = [&](int cap) {
        auto backend = std::make_shared<ScriptedBackend>(pool_script());
        auto options = fast_options();
        options.max_concurrency = cap;
        ChatGateway gateway(backend, options);
        std::vector<std::string> texts;
        for (const auto& s : gateway.sample_completions(dragon_messages(), 10, 0.5, 99)) {
            texts.push_back(s.text);
        }
        return texts;
    };
    CHECK(run(1) == run(8));
}

TEST_CASE("http backend speaks the chat completions wire format") {
    httplib::Server server;
    nlohmann::json seen_body;
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = nlohmann::json::parse(req.body);
        seen_auth = req.get_header_value("Authorization");
        nlohmann::json choice;
        choice["message"]["role"] = "assistant";
        choice["message"]["content"] = "Answer: Paris";
        choice["logprobs"]["content"] = nlohmann::json::array();
        for (double lp : {-0.1, -0.05, -0.3}) {
            choice["logprobs"]["content"].push_back({{"token", "t"}, {"logprob", lp}});
        }
        nlohmann::json reply;
        reply["choices"] = nlohmann::json::array({choice});
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpBackendConfig config;
    config.base_url = "http://127.0.0.1:" + std::to_string(port);
    config.model = "test-model";
    config.api_key = "sk-test";
    HttpBackend backend(config);

    CompletionRequest request;
    request.messages = dragon_messages();
    request.temperature = 0.5;
    request.max_tokens = 64;
    request.seed = 41;
    request.sample_index = 2;
    const auto completion = backend.complete(request);

    CHECK(completion.text == "Answer: Paris");
    CHECK(completion.token_logprobs == std::vector<double>{-0.1, -0.05, -0.3});
    CHECK(seen_auth == "Bearer sk-test");
    CHECK(seen_body["model"] == "test-model");
    CHECK(seen_body["temperature"] == 0.5);
    CHECK(seen_body["max_tokens"] == 64);
    CHECK(seen_body["seed"] == 43);  // base seed offset by the sample index
    REQUIRE(seen_body["messages"].size() == 2);
    CHECK(seen_body["messages"][0]["role"] == "system");
    CHECK(seen_body["messages"][1]["content"] ==
          "Question: When does the new dragon ball z series come out?");

    server.stop();
    server_thread.join();
}

TEST_CASE("http backend maps statuses onto transport and backend errors") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("overloaded", "text/plain");
    });
    server.Post("/bad/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 400;
        res.set_content("{\"error\": \"bad request\"}", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpBackendConfig config;
    config.base_url = "http://127.0.0.1:" + std::to_string(port);
    config.model = "test-model";
    CompletionRequest request;
    request.messages = {user_msg("hi")};

    HttpBackend retryable(config);
    CHECK_THROWS_AS(retryable.complete(request), TransportError);

    config.chat_path = "/bad/chat/completions";
    HttpBackend fatal(config);
    try {
        fatal.complete(request);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.status == 400);
        CHECK(e.body.find("bad request") != std::string::npos);
    }

    server.stop();
    server_thread.join();

    // nobody listening: a transport error, so the gateway would retry it
    config.base_url = "http://127.0.0.1:1";
    config.chat_path = "/v1/chat/completions";
    config.timeout_seconds = 2;
    HttpBackend unreachable(config);
    CHECK_THROWS_AS(unreachable.complete(request), TransportError);
}

TEST_CASE("http backend sums echo logprobs over the continuation only") {
    httplib::Server server;
    nlohmann::json seen_body;
    server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = nlohmann::json::parse(req.body);
        const std::string prompt = seen_body["prompt"].get<std::string>();
        // tokens: everything before "French:" is prefix, the rest continuation
        const auto split = prompt.find("French:");
        nlohmann::json choice;
        choice["logprobs"]["token_logprobs"] = {nullptr, -1.0, -2.0, -4.0};
        choice["logprobs"]["text_offset"] = {0, 5, split, split + 7};
        nlohmann::json reply;
        reply["choices"] = nlohmann::json::array({choice});
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpBackendConfig config;
    config.base_url = "http://127.0.0.1:" + std::to_string(port);
    config.model = "test-model";
    config.echo_scoring = true;
    HttpBackend backend(config);
    CHECK(backend.supports_scoring());

    const std::vector<ChatMessage> prefix = {user_msg("English: It is cool.")};
    const double logprob = backend.score(prefix, "French: C'est cool.");
    CHECK(logprob == Catch::Approx(-6.0));  // the two tokens at and after the split
    CHECK(seen_body["echo"] == true);
    CHECK(seen_body["max_tokens"] == 0);
    CHECK(seen_body["prompt"].get<std::string>().find("English: It is cool.") !=
          std::string::npos);

    server.stop();
    server_thread.join();

    config.echo_scoring = false;
    HttpBackend no_scoring(config);
    CHECK_THROWS_AS(no_scoring.score(prefix, "x"), UnsupportedCapabilityError);
}
