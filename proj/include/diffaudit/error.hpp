#pragma once

#include <stdexcept>
#include <string>

namespace diffaudit {

/// Error classes. Each maps to a distinct CLI exit code.
enum class ErrorKind {
    invalid_input = 10,
    config = 11,
    missing_dependency = 12,
    io = 13,
    replay_miss = 14,
    transport = 15,
    inconsistency = 16,
    stage = 17,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::config: return "config";
    case ErrorKind::missing_dependency: return "missing-dependency";
    case ErrorKind::io: return "io";
    case ErrorKind::replay_miss: return "replay-miss";
    case ErrorKind::transport: return "transport";
    case ErrorKind::inconsistency: return "inconsistency";
    case ErrorKind::stage: return "stage";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(ErrorKind::invalid_input, what);
}

} // namespace diffaudit
