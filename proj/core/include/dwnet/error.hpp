#pragma once

#include <stdexcept>
#include <string>

namespace dwnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or matrix dimensions do not agree with what an operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed input file or record. The message carries the file and line.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or precondition violation.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Linear system could not be solved to the required accuracy.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Failure inside a multi-stage pipeline, tagged with the stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace dwnet
