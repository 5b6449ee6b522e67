#pragma once

#include <stdexcept>
#include <string>

namespace ookfso {

enum class ErrorCode {
    invalid_argument,
    config,
    io,
    file_not_found,
    bad_magic,
    version_mismatch,
    truncated_payload,
    bad_header,
    shape_mismatch,
    label_corruption,
    kind_mismatch,
    stale_cache,
    non_finite,
    divergence,
    undefined_metric,
    gradcheck_failed,
};

// Coarse grouping used for CLI exit codes.
enum class ErrorCategory { config = 1, data = 2, numeric = 3 };

const char* to_string(ErrorCode code) noexcept;
ErrorCategory category_of(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    ErrorCategory category() const noexcept { return category_of(code_); }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

inline const char* to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::config: return "config error";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::file_not_found: return "file not found";
    case ErrorCode::bad_magic: return "bad magic";
    case ErrorCode::version_mismatch: return "version mismatch";
    case ErrorCode::truncated_payload: return "truncated payload";
    case ErrorCode::bad_header: return "bad header";
    case ErrorCode::shape_mismatch: return "shape mismatch";
    case ErrorCode::label_corruption: return "label corruption";
    case ErrorCode::kind_mismatch: return "kind mismatch";
    case ErrorCode::stale_cache: return "stale cache";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::undefined_metric: return "undefined metric";
    case ErrorCode::gradcheck_failed: return "gradient check failed";
    }
    return "unknown";
}

inline ErrorCategory category_of(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::config:
        return ErrorCategory::config;
    case ErrorCode::non_finite:
    case ErrorCode::divergence:
    case ErrorCode::gradcheck_failed:
    case ErrorCode::undefined_metric:
        return ErrorCategory::numeric;
    default:
        return ErrorCategory::data;
    }
}

} // namespace ookfso
