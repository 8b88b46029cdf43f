#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eslr {

/// Input failed a documented precondition (bad index, wrong dimension, ...).
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class ParseError : public ValidationError {
   public:
    ParseError(std::size_t line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const { return line_; }

   private:
    std::size_t line_;
};

class ShapeError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values surfaced during a rollout or training run.
class NumericalError : public std::runtime_error {
   public:
    NumericalError(std::size_t index, const std::string& what)
        : std::runtime_error(what), index_(index) {}

    std::size_t index() const { return index_; }

   private:
    std::size_t index_;
};

}  // namespace eslr
