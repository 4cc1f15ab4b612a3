#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace possiv {

enum class ErrorCode {
    Config = 2,
    Parse = 3,
    Data = 4,
    Numerical = 5,
    Degeneracy = 6,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::Config: return "config";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Data: return "data";
    case ErrorCode::Numerical: return "numerical";
    case ErrorCode::Degeneracy: return "degeneracy";
    }
    return "unknown";
}

/// Base of every error raised by the library. The numeric value of code()
/// doubles as the CLI exit status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorCode::Config, what) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error(ErrorCode::Parse, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorCode::Data, what) {}
};

/// Iterative solver failure; residual() is the last measured residual.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what, double residual = 0.0)
        : Error(ErrorCode::Numerical, what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

struct DegeneracyError : Error {
    explicit DegeneracyError(const std::string& what) : Error(ErrorCode::Degeneracy, what) {}
};

} // namespace possiv
