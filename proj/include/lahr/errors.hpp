#pragma once

#include <stdexcept>
#include <string>

namespace lahr {

// Violated precondition or misuse of an interface. These indicate programmer
// error at a call site and carry enough context (names, shapes, indices) to
// locate the offending call.
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// Numeric breakdown at runtime: non-finite values, diverged optimization,
// non-deterministic re-evaluation where determinism is required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem and OS-level failures (open/read/write/listen).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally invalid input data: malformed records, bad checkpoints,
// mismatched dimensions in external files.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lahr
