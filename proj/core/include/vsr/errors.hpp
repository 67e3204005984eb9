// Typed error taxonomy. The CLI maps each class to a stable one-line
// "error[CODE]:" prefix, so the kinds below are part of the public contract.
#pragma once

#include <stdexcept>
#include <string>

namespace vsr {

class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& msg) : std::runtime_error(msg), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("CONFIG", m) {}
};

// Shape mismatches between tensors, clips, or network stages.
struct DimensionError : Error {
  explicit DimensionError(const std::string& m) : Error("DIMENSION", m) {}
};

// Malformed on-disk artifacts (clip directories, flow sidecars, checkpoints).
struct FormatError : Error {
  explicit FormatError(const std::string& m) : Error("FORMAT", m) {}
};

// API misuse: wrong domain, value range, or argument combination.
struct UsageError : Error {
  explicit UsageError(const std::string& m) : Error("USAGE", m) {}
};

// Filesystem failures.
struct IoError : Error {
  explicit IoError(const std::string& m) : Error("IO", m) {}
};

// Non-finite values encountered while training.
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error("NUMERIC", m) {}
};

// A weight that must never move did (frozen-group drift), or equivalent
// internal invariant violations caught at runtime.
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& m) : Error("INTEGRITY", m) {}
};

}  // namespace vsr
