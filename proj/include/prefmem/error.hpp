#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace prefmem {

// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape disagreement between two operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent input data. Carries the 1-based line number when
// the data came from a line-oriented file (0 when not applicable).
class DataError : public Error {
public:
    explicit DataError(const std::string& what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// A required file (dataset, checkpoint) does not exist.
class MissingArtifact : public Error {
public:
    using Error::Error;
};

}  // namespace prefmem
