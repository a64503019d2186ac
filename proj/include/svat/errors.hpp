#pragma once

#include <stdexcept>
#include <string>

namespace svat {

// Shape disagreement between operands.
class DimensionError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN or Inf produced or supplied.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller misuse: bad arguments, empty inputs, out-of-range indices.
class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A documented precondition of a model operation was violated.
class ContractError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Well-formed input carrying invalid values (e.g. non-positive close).
class DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class IngestionError : public std::runtime_error {
 public:
  IngestionError(const std::string& file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(file),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

// Score rows and calendar days that do not line up.
class AlignmentError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace svat
