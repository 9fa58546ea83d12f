#pragma once

// Error hierarchy shared by every evs module.
//
// ValidationError and its subclasses mean "the inputs are wrong" (CLI exit 2);
// IoError means "the filesystem or stream failed" (CLI exit 1).

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace evs {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Bad EvolutionConfig / CLI parameter combination.
class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Operand dimensions do not line up.
class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// A label has no instances, so its mean distribution is undefined.
class UndefinedMeanError : public ValidationError {
public:
    explicit UndefinedMeanError(std::size_t label)
        : ValidationError("label " + std::to_string(label) +
                          " has no instances; its mean distribution is undefined"),
          label_(label) {}

    std::size_t label() const noexcept { return label_; }

private:
    std::size_t label_;
};

/// Exhaustive enumeration would exceed the configured cap.
class EnumerationCapError : public ValidationError {
public:
    EnumerationCapError(std::uint64_t count, std::uint64_t cap, bool overflowed)
        : ValidationError(overflowed
                              ? "combination count overflows 64 bits (cap " +
                                    std::to_string(cap) + ")"
                              : "combination count " + std::to_string(count) +
                                    " exceeds cap " + std::to_string(cap)),
          count_(count), cap_(cap) {}

    std::uint64_t count() const noexcept { return count_; }
    std::uint64_t cap() const noexcept { return cap_; }

private:
    std::uint64_t count_;
    std::uint64_t cap_;
};

// ---- file format errors -------------------------------------------------

class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class BadMagicError : public FormatError {
public:
    BadMagicError() : FormatError("bad magic: not an EVSL1 logits file") {}
};

class TruncatedError : public FormatError {
public:
    TruncatedError(std::string what_part, std::uint64_t expected, std::uint64_t actual)
        : FormatError("truncated " + what_part + ": expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(actual)),
          expected_(expected), actual_(actual) {}

    std::uint64_t expected() const noexcept { return expected_; }
    std::uint64_t actual() const noexcept { return actual_; }

private:
    std::uint64_t expected_;
    std::uint64_t actual_;
};

class HeaderError : public FormatError {
public:
    using FormatError::FormatError;
};

class LabelCountError : public FormatError {
public:
    LabelCountError(std::size_t labels, std::size_t instances)
        : FormatError("labels array has " + std::to_string(labels) + " entries but num_instances is " +
                      std::to_string(instances)) {}
};

class LabelRangeError : public FormatError {
public:
    LabelRangeError(std::size_t instance, std::int64_t label, std::size_t num_labels)
        : FormatError("instance " + std::to_string(instance) + " has label " + std::to_string(label) +
                      " outside [0, " + std::to_string(num_labels) + ")"),
          instance_(instance) {}

    std::size_t instance() const noexcept { return instance_; }

private:
    std::size_t instance_;
};

class NegativeProbabilityError : public FormatError {
public:
    NegativeProbabilityError(std::size_t row, std::size_t col)
        : FormatError("negative or non-finite probability at row " + std::to_string(row) + ", column " +
                      std::to_string(col)),
          row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class RowSumError : public FormatError {
public:
    RowSumError(std::size_t row, double sum)
        : FormatError("row " + std::to_string(row) + " sums to " + std::to_string(sum) +
                      ", expected 1 within 1e-4"),
          row_(row), sum_(sum) {}

    std::size_t row() const noexcept { return row_; }
    double sum() const noexcept { return sum_; }

private:
    std::size_t row_;
    double sum_;
};

class PayloadCapError : public FormatError {
public:
    using FormatError::FormatError;
};

} // namespace evs
