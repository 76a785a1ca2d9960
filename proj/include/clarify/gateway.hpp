#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "clarify/backend.hpp"
#include "clarify/cache.hpp"
#include "clarify/errors.hpp"
#include "clarify/types.hpp"

namespace clarify {

struct GatewayOptions {
    std::string cache_dir;  // empty disables the file cache
    int max_concurrency = 4;
    int max_retries = 3;  // extra attempts after the first, transport errors only
    std::chrono::milliseconds retry_base_delay{100};
};

// Raised when a multi-sample request dies partway; carries the samples that
// did complete so callers can report exactly how far they got.
struct PartialFailureError : Error {
    PartialFailureError(const std::string& what, std::vector<Completion> completed,
                        int failed_index)
        : Error(what), completed(std::move(completed)), failed_index(failed_index) {}
    std::vector<Completion> completed;
    int failed_index;
};

// Single entry point for model calls. Responsibilities, in order: file
// cache, in-flight deduplication, concurrency cap, transient-failure
// retries. Identical requests hit the backend exactly once per cache
// lifetime.
class ChatGateway {
public:
    explicit ChatGateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options = {})
        : backend_(std::move(backend)),
          options_(options),
          semaphore_(std::max(1, std::min(options.max_concurrency, 1024))) {
        if (!backend_) throw ConfigError("gateway needs a backend");
        if (!options_.cache_dir.empty()) cache_.emplace(options_.cache_dir);
    }

    Completion greedy_complete(const std::vector<ChatMessage>& messages, int max_tokens = 256) {
        CompletionRequest request;
        request.messages = messages;
        request.temperature = 0.0;
        request.max_tokens = max_tokens;
        return run_completion(request);
    }

    std::vector<Completion> sample_completions(const std::vector<ChatMessage>& messages, int n,
                                               double temperature, std::uint64_t seed,
                                               int max_tokens = 256) {
        if (n < 1) throw ConfigError("sample_completions needs n >= 1");
        std::vector<Completion> samples;
        samples.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            CompletionRequest request;
            request.messages = messages;
            request.temperature = temperature;
            request.max_tokens = max_tokens;
            request.seed = seed;
            request.sample_index = i;
            try {
                samples.push_back(run_completion(request));
            } catch (const Error& e) {
                throw PartialFailureError("sample " + std::to_string(i) + " of " +
                                              std::to_string(n) + " failed: " + e.what(),
                                          std::move(samples), i);
            }
        }
        return samples;
    }

    double score_continuation(const std::vector<ChatMessage>& prefix,
                              const std::string& continuation) {
        if (continuation.empty()) return 0.0;  // zero tokens, zero log-probability
        nlohmann::json request;
        request["backend"] = backend_->id();
        request["kind"] = "score";
        request["messages"] = messages_to_json(prefix);
        request["continuation"] = continuation;
        const auto response = cached_fetch(request, [&] {
            nlohmann::json r;
            r["logprob"] = backend_->score(prefix, continuation);
            return r;
        });
        return response.at("logprob").get<double>();
    }

    bool supports_scoring() const { return backend_->supports_scoring(); }

    std::uint64_t backend_calls() const { return backend_calls_.load(); }
    std::uint64_t cache_hits() const { return cache_hits_.load(); }

private:
    static nlohmann::json messages_to_json(const std::vector<ChatMessage>& messages) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& m : messages) {
            out.push_back({{"role", to_string(m.role)}, {"content", m.content}});
        }
        return out;
    }

    Completion run_completion(const CompletionRequest& request) {
        nlohmann::json key;
        key["backend"] = backend_->id();
        key["kind"] = "complete";
        key["messages"] = messages_to_json(request.messages);
        key["temperature"] = request.temperature;
        key["max_tokens"] = request.max_tokens;
        key["seed"] = request.seed;
        key["sample_index"] = request.sample_index;
        const auto response = cached_fetch(key, [&] {
            const Completion completion = backend_->complete(request);
            nlohmann::json r;
            r["text"] = completion.text;
            r["token_logprobs"] = completion.token_logprobs;
            return r;
        });
        Completion completion;
        completion.text = response.at("text").get<std::string>();
        completion.token_logprobs = response.at("token_logprobs").get<std::vector<double>>();
        return completion;
    }

    nlohmann::json cached_fetch(const nlohmann::json& request,
                                const std::function<nlohmann::json()>& produce) {
        const std::string key = ResponseCache::key_for(request);
        if (cache_) {
            if (auto hit = cache_->get(key, request)) {
                cache_hits_.fetch_add(1);
                return *hit;
            }
        }

        // In-flight deduplication: the first caller becomes the leader and
        // publishes its result; everyone else waits on the shared future.
        std::shared_future<nlohmann::json> future;
        std::promise<nlohmann::json> promise;
        bool leader = false;
        {
            std::lock_guard<std::mutex> lock(inflight_mutex_);
            auto it = inflight_.find(key);
            if (it != inflight_.end()) {
                future = it->second;
            } else {
                future = promise.get_future().share();
                inflight_.emplace(key, future);
                leader = true;
            }
        }
        if (!leader) return future.get();  // rethrows the leader's failure

        try {
            nlohmann::json response;
            {
                std::counting_semaphore<1024>& sem = semaphore_;
                sem.acquire();
                struct Release {
                    std::counting_semaphore<1024>& s;
                    ~Release() { s.release(); }
                } release{sem};
                response = with_retries(produce);
            }
            if (cache_) cache_->put(key, request, response);
            promise.set_value(response);
            forget_inflight(key);
            return response;
        } catch (...) {
            promise.set_exception(std::current_exception());
            forget_inflight(key);
            throw;
        }
    }

    nlohmann::json with_retries(const std::function<nlohmann::json()>& produce) {
        for (int attempt = 0;; ++attempt) {
            try {
                backend_calls_.fetch_add(1);
                return produce();
            } catch (const TransportError&) {
                if (attempt >= options_.max_retries) throw;
                std::this_thread::sleep_for(options_.retry_base_delay * (1l << attempt));
            }
        }
    }

    void forget_inflight(const std::string& key) {
        std::lock_guard<std::mutex> lock(inflight_mutex_);
        inflight_.erase(key);
    }

    std::shared_ptr<ChatBackend> backend_;
    GatewayOptions options_;
    std::optional<ResponseCache> cache_;
    std::counting_semaphore<1024> semaphore_;
    std::mutex inflight_mutex_;
    std::map<std::string, std::shared_future<nlohmann::json>> inflight_;
    std::atomic<std::uint64_t> backend_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
};

}  // namespace clarify
