#pragma once

#include <stdexcept>
#include <string>

namespace dadet {

// Process exit codes used by the CLI.
enum class ExitCode : int {
    kSuccess = 0,
    kConfigError = 2,
    kDataError = 3,
    kNumericAbort = 4,
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor or image dimensions that do not satisfy an operation's geometry.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Dataset or annotation content outside its declared value range.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& path, int line, const std::string& what)
        : DataError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

// Checkpoint file unreadable, truncated, or missing a parameter group.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericAbort : public std::runtime_error {
public:
    NumericAbort(long iteration, const std::string& what)
        : std::runtime_error("non-finite value at iteration " + std::to_string(iteration) + ": " + what),
          iteration_(iteration) {}

    long iteration() const noexcept { return iteration_; }

private:
    long iteration_;
};

}  // namespace dadet
