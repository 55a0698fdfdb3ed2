#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace siamhar {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A sequence is shorter than an operation's receptive field requires.
class SequenceTooShortError : public Error {
public:
    SequenceTooShortError(std::size_t required, std::size_t actual, const std::string& what)
        : Error(what + ": sequence too short, need at least " + std::to_string(required) +
                " frames, got " + std::to_string(actual)),
          required_(required), actual_(actual) {}

    std::size_t required() const noexcept { return required_; }
    std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t required_;
    std::size_t actual_;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf where only finite values are allowed.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Malformed input files, unknown labels, bad checkpoints.
class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace siamhar
