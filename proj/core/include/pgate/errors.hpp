#pragma once

#include <stdexcept>
#include <string>

namespace pgate {

// Base class for all persona-gate errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed JSON input.
struct ParseError : Error {
    using Error::Error;
};

// Structurally valid JSON that violates the episode/tool schema.
// The message names the offending path.
struct SchemaError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// A placeholder could not be filled (or an unknown one was found).
struct TemplateError : Error {
    using Error::Error;
};

// Retryable network-level failure.
struct TransportError : Error {
    using Error::Error;
};

// Non-2xx reply from the provider. 4xx is never retried.
struct ProviderError : Error {
    using Error::Error;
};

// Provider payload that cannot be parsed or coerced; carries the raw payload.
struct DecodeError : Error {
    DecodeError(const std::string& msg, std::string raw_payload)
        : Error(msg), raw(std::move(raw_payload)) {}
    std::string raw;
};

// The mock script has no entry matching the request.
struct ScriptExhausted : Error {
    using Error::Error;
};

// Replay mode saw a request that was never recorded.
struct CassetteMiss : Error {
    using Error::Error;
};

// Internal inconsistency in a WorldDb.
struct ExecutorError : Error {
    using Error::Error;
};

struct EmptyDataset : Error {
    using Error::Error;
};

// A rewrite backend returned an empty prompt.
struct EmptyRewrite : Error {
    using Error::Error;
};

}  // namespace pgate
