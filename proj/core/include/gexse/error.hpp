#pragma once

#include <stdexcept>
#include <string>

namespace gexse {

enum class ErrorKind {
    usage,    // bad flags, invalid configuration values
    data,     // malformed or missing input files, caches, checkpoints
    shape,    // tensor shape contract violated
    numeric,  // NaN/Inf encountered, degenerate numerics
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) { throw Error(ErrorKind::usage, msg); }
[[noreturn]] inline void throw_data(const std::string& msg) { throw Error(ErrorKind::data, msg); }
[[noreturn]] inline void throw_shape(const std::string& msg) { throw Error(ErrorKind::shape, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrorKind::numeric, msg); }

/// Process exit code for a failure of the given kind: 1 usage, 2 data, 3 numeric.
inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return 1;
        case ErrorKind::data:
        case ErrorKind::shape: return 2;
        case ErrorKind::numeric: return 3;
    }
    return 1;
}

}  // namespace gexse
