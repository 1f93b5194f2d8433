#pragma once

#include <stdexcept>
#include <string>

namespace avd {

/// Incompatible tensor shapes or out-of-range geometry.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value or missing prerequisite.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Train and test splits share a source video.
class SplitLeakageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Violated API contract (e.g. backward() on a non-scalar).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Numeric failure during optimization (a loss became NaN or infinite).
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, long long last_good_step)
      : std::runtime_error(what), last_good_step_(last_good_step) {}

  /// Global step index of the last finite record, or -1 if none.
  long long last_good_step() const noexcept { return last_good_step_; }

 private:
  long long last_good_step_;
};

enum class FormatErrorCode {
  io,
  bad_magic,
  version_mismatch,
  truncated,
  malformed,
};

/// Corrupted or incompatible on-disk container.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  FormatErrorCode code() const noexcept { return code_; }

 private:
  FormatErrorCode code_;
};

}  // namespace avd
