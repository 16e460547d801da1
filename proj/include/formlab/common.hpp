#pragma once

#include <stdexcept>
#include <string>

namespace formlab {

enum class ErrorKind {
    io,
    parse,
    config,
    numeric,
    contract,
    insufficient_data,
    internal,
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::io: return "io";
        case ErrorKind::parse: return "parse";
        case ErrorKind::config: return "config";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::contract: return "contract";
        case ErrorKind::insufficient_data: return "insufficient_data";
        case ErrorKind::internal: return "internal";
    }
    return "internal";
}

// Process exit code per error kind; 0 and 1 are reserved for success and
// unclassified failures.
inline int error_exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::io: return 2;
        case ErrorKind::parse: return 3;
        case ErrorKind::config: return 4;
        case ErrorKind::numeric: return 5;
        case ErrorKind::contract: return 6;
        case ErrorKind::insufficient_data: return 7;
        case ErrorKind::internal: return 1;
    }
    return 1;
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }
    const char* kind_name() const { return error_kind_name(kind_); }
    int exit_code() const { return error_exit_code(kind_); }

private:
    ErrorKind kind_;
};

}  // namespace formlab
