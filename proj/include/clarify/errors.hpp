#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace clarify {

// Base class for every error raised by the library. Subclasses map to
// distinct failure contracts so callers can catch selectively.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// ---- corpus / config -------------------------------------------------------

struct SchemaError : Error {
    SchemaError(const std::string& what, long line = -1, std::string field = {})
        : Error(line >= 0 ? what + " (line " + std::to_string(line) +
                                (field.empty() ? "" : ", field '" + field + "'") + ")"
                          : what),
          line(line),
          field(std::move(field)) {}
    long line;
    std::string field;
};

struct DuplicateIdError : Error {
    explicit DuplicateIdError(const std::string& id)
        : Error("duplicate example id '" + id + "'"), id(id) {}
    std::string id;
};

struct MissingGoldError : Error {
    using Error::Error;
};

struct ModeUnsupportedError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// ---- gateway ---------------------------------------------------------------

struct TransportError : Error {
    using Error::Error;
};

struct BackendError : Error {
    BackendError(const std::string& what, int status = 0, std::string body = {})
        : Error(what), status(status), body(std::move(body)) {}
    int status;
    std::string body;
};

struct CacheCorruptionError : Error {
    using Error::Error;
};

struct UnsupportedCapabilityError : Error {
    using Error::Error;
};

// ---- prompting -------------------------------------------------------------

struct PoolTooSmallError : Error {
    using Error::Error;
};

struct MissingExtrasError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

// Raised when an assistant completion cannot be read as the expected
// structured payload. Evaluation treats this as an incorrect answer.
struct UnparseableOutputError : Error {
    explicit UnparseableOutputError(const std::string& what, std::string raw = {})
        : Error(what), raw(std::move(raw)) {}
    std::string raw;
};

// ---- equivalence / metrics -------------------------------------------------

struct InvalidDistributionError : Error {
    using Error::Error;
};

struct DegenerateLabelsError : Error {
    using Error::Error;
};

struct UnknownIdError : Error {
    using Error::Error;
};

struct ZeroTotalGainError : Error {
    using Error::Error;
};

struct EmptyCompletionError : Error {
    using Error::Error;
};

struct VersionMismatchError : Error {
    using Error::Error;
};

}  // namespace clarify
