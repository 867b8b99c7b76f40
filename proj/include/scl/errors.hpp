#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace scl {

// Tensor shapes that do not fit together.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke a documented precondition (bad label, non-scalar loss, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configuration value outside its allowed range.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN or Inf produced by an operation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The generator cannot satisfy the requested class-code constraints.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed dataset or checkpoint file. offset() is the byte position where
// parsing stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        detail_(what),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

}  // namespace scl
