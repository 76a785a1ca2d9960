#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "clarify/errors.hpp"
#include "clarify/types.hpp"

namespace clarify {

// A chat completion provider. One call, one completion; fan-out and caching
// live in the gateway.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    // Stable identifier mixed into cache keys (model name for HTTP backends).
    virtual std::string id() const = 0;

    virtual bool supports_scoring() const = 0;

    virtual Completion complete(const CompletionRequest& request) = 0;

    // Total log-probability of `continuation` given `prefix`, in nats.
    virtual double score(const std::vector<ChatMessage>& prefix,
                         const std::string& continuation) = 0;
};

}  // namespace clarify
