/**
 * @file error.hpp
 * @brief Exception types shared by every pipeline stage.
 *
 * Stages throw; the CLI maps exception families onto its exit-code contract
 * (InputError/ValidationError -> 2, TransportError -> 3).
 */

#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace trialmatch {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: unparseable files, unknown ids, violated preconditions.
class InputError : public Error {
public:
    using Error::Error;
};

/// A DNF referenced a question that has no answer / assignment.
class MissingAnswerError : public InputError {
public:
    explicit MissingAnswerError(std::string question_id)
        : InputError("no answer for question '" + question_id + "'"),
          question_id_(std::move(question_id)) {}

    const std::string& question_id() const noexcept { return question_id_; }

private:
    std::string question_id_;
};

/// Too many unknowns to enumerate exactly.
class CapacityError : public Error {
public:
    CapacityError(std::size_t unknowns, std::size_t limit)
        : Error("marginalization over " + std::to_string(unknowns) +
                " unknown answers exceeds the limit of " + std::to_string(limit)),
          unknowns_(unknowns) {}

    std::size_t unknowns() const noexcept { return unknowns_; }

private:
    std::size_t unknowns_;
};

/// Backend could not be reached, timed out or returned a non-success status.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Backend output could not be interpreted. The raw payload is retained.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// Response is not valid JSON.
class ParseError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Response parsed but a field is missing or out of range.
class ValidationError : public FormatError {
public:
    using FormatError::FormatError;
};

class DimensionMismatch : public InputError {
public:
    using InputError::InputError;
};

/// A composed trial failed structural validation.
class CompositionError : public Error {
public:
    CompositionError(const std::string& what, std::vector<std::string> violations)
        : Error(what), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

}  // namespace trialmatch
