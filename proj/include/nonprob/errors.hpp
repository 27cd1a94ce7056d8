#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace nonprob {

// Exit-code contract shared with the CLI:
//   0 success, 2 config error, 3 data error, 4 estimation error, 5 internal.
enum class ErrorCategory : int {
    config = 2,
    data = 3,
    estimation = 4,
    internal = 5,
};

inline const char* to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::config: return "config";
        case ErrorCategory::data: return "data";
        case ErrorCategory::estimation: return "estimation";
        case ErrorCategory::internal: return "internal";
    }
    return "internal";
}

// All library failures are thrown as Error. `code` is a stable,
// machine-readable slug (e.g. "empty-cell", "rank-deficiency").
class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string code, const std::string& message)
        : std::runtime_error(message), category_(category), code_(std::move(code)) {}

    ErrorCategory category() const noexcept { return category_; }
    const std::string& code() const noexcept { return code_; }
    int exit_code() const noexcept { return static_cast<int>(category_); }

private:
    ErrorCategory category_;
    std::string code_;
};

struct ConfigError : Error {
    ConfigError(std::string code, const std::string& message)
        : Error(ErrorCategory::config, std::move(code), message) {}
};

struct DataError : Error {
    DataError(std::string code, const std::string& message)
        : Error(ErrorCategory::data, std::move(code), message) {}
};

struct EstimationError : Error {
    EstimationError(std::string code, const std::string& message)
        : Error(ErrorCategory::estimation, std::move(code), message) {}
};

struct InternalError : Error {
    InternalError(std::string code, const std::string& message)
        : Error(ErrorCategory::internal, std::move(code), message) {}
};

}  // namespace nonprob
