#pragma once

#include <stdexcept>
#include <string>

namespace classattn {

enum class ErrorCode {
    EmptyInput,
    InsufficientPoints,
    DegenerateNull,
    Validation,
    Auth,
    NotFound,
    SessionClosed,
    Parse,
};

const char* error_code_name(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Raised by config and session validation; names the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(ErrorCode::Validation, field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace classattn
