#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dphi {

/// Raised when a caller breaks a documented precondition (shape mismatch,
/// out-of-range argument). Indicates a programming error, not bad data.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input is well-formed but numerically degenerate (e.g. zero-norm truth).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative solver or time stepper failed to produce a usable result.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary file could not be decoded. `offset()` is the byte position at which
/// decoding stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

#define DPHI_REQUIRE(cond, msg)                      \
  do {                                               \
    if (!(cond)) throw ::dphi::ContractViolation(msg); \
  } while (0)

}  // namespace dphi
