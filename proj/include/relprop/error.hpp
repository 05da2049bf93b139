#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace relprop {

// Caller handed us something that violates an operation's precondition
// (shape mismatch, out-of-range parameter, unbalanced table, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file did not conform to its declared format. offset() is the byte
// position where parsing gave up.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Non-finite values, iteration caps, NaN losses.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Internal bookkeeping disagreed with itself, e.g. a pooling winner index
// that does not belong to the forward pass it came from.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A statistic that has no value for the given data (constant vectors,
// zero variance).
class UndefinedStatistic : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace relprop
