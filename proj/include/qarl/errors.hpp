#pragma once

#include <stdexcept>
#include <string>

namespace qarl {

// Error categories map one-to-one onto CLI exit codes:
// ConfigError -> 2, DataError -> 3, BackendError -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Judge reply did not contain a parseable score. Carries the raw reply so
// callers can log it.
struct NoScoreFound : BackendError {
    explicit NoScoreFound(std::string reply_text)
        : BackendError("no similarity score found in judge reply"),
          reply(std::move(reply_text)) {}
    std::string reply;
};

struct AuthMissing : BackendError {
    explicit AuthMissing(const std::string& env_var)
        : BackendError("judge API key environment variable not set: " + env_var) {}
};

struct TransportError : BackendError {
    using BackendError::BackendError;
};

struct ExhaustedRetries : BackendError {
    ExhaustedRetries(std::size_t attempts, const std::string& last_error)
        : BackendError("judge call failed after " + std::to_string(attempts) +
                       " attempts; last error: " + last_error) {}
};

}  // namespace qarl
