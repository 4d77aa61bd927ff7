#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace htapx {

/// Stable error codes surfaced by every module and by the CLI on stderr.
enum class ErrorCode {
    Schema,       // E_SCHEMA
    Syntax,       // E_SYNTAX
    Arity,        // E_ARITY
    Param,        // E_PARAM
    Unsupported,  // E_UNSUPPORTED
    Mismatch,     // E_MISMATCH
    Balance,      // E_BALANCE
    Vocab,        // E_VOCAB
    Degenerate,   // E_DEGENERATE
    Diverge,      // E_DIVERGE
    Io,           // E_IO
    Version,      // E_VERSION
    Dim,          // E_DIM
    NotFound,     // E_NOT_FOUND
    State,        // E_STATE
    Timeout,      // E_TIMEOUT
    Auth,         // E_AUTH
    Http,         // E_HTTP
    Llm,          // E_LLM
    Labels,       // E_LABELS
    Bind,         // E_BIND
    Load,         // E_LOAD
};

constexpr std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::Schema: return "E_SCHEMA";
        case ErrorCode::Syntax: return "E_SYNTAX";
        case ErrorCode::Arity: return "E_ARITY";
        case ErrorCode::Param: return "E_PARAM";
        case ErrorCode::Unsupported: return "E_UNSUPPORTED";
        case ErrorCode::Mismatch: return "E_MISMATCH";
        case ErrorCode::Balance: return "E_BALANCE";
        case ErrorCode::Vocab: return "E_VOCAB";
        case ErrorCode::Degenerate: return "E_DEGENERATE";
        case ErrorCode::Diverge: return "E_DIVERGE";
        case ErrorCode::Io: return "E_IO";
        case ErrorCode::Version: return "E_VERSION";
        case ErrorCode::Dim: return "E_DIM";
        case ErrorCode::NotFound: return "E_NOT_FOUND";
        case ErrorCode::State: return "E_STATE";
        case ErrorCode::Timeout: return "E_TIMEOUT";
        case ErrorCode::Auth: return "E_AUTH";
        case ErrorCode::Http: return "E_HTTP";
        case ErrorCode::Llm: return "E_LLM";
        case ErrorCode::Labels: return "E_LABELS";
        case ErrorCode::Bind: return "E_BIND";
        case ErrorCode::Load: return "E_LOAD";
    }
    return "E_UNKNOWN";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Error raised for a non-success HTTP status from an LLM endpoint.
class HttpError : public Error {
public:
    HttpError(int status, const std::string& message)
        : Error(ErrorCode::Http, "status " + std::to_string(status) + ": " + message),
          status_(status) {}

    int status() const noexcept { return status_; }

private:
    int status_;
};

}  // namespace htapx
