#pragma once

#include <stdexcept>
#include <string>

namespace shrinkproj {

enum class ErrorCode {
    InvalidArgument,
    NonConverged,
    Infeasible,
    UnsupportedCombination,
    ParseError,
    ValidationError,
    IoError,
};

inline const char* to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::NonConverged: return "NON_CONVERGED";
    case ErrorCode::Infeasible: return "INFEASIBLE";
    case ErrorCode::UnsupportedCombination: return "UNSUPPORTED_COMBINATION";
    case ErrorCode::ParseError: return "PARSE_ERROR";
    case ErrorCode::ValidationError: return "VALIDATION_ERROR";
    case ErrorCode::IoError: return "IO_ERROR";
    }
    return "UNKNOWN";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what)
    {
    }

    ErrorCode code() const noexcept { return code_; }
    /// what() without the code prefix
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
};

} // namespace shrinkproj
