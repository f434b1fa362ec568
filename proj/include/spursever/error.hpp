#pragma once

#include <stdexcept>
#include <string>

namespace spursever {

/// Raised when a caller violates an operation's precondition (bad shape,
/// label out of range, selection larger than its pool, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for filesystem and (de)serialization failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps a failure inside an experiment stage so the CLI can report which
/// stage aborted.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace spursever
