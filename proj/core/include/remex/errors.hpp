#pragma once

#include <stdexcept>
#include <string>

namespace remex {

/// Base class for all engine errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data (corpus records, trajectory files, policy files).
class ParseError : public Error {
  public:
    using Error::Error;
};

/// Invalid or missing configuration (files, environment, argument combos).
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// A remote call failed after exhausting its retry budget.
class TransportError : public Error {
  public:
    using Error::Error;
};

/// Rollout groups were drawn from an old-policy snapshot that has since been
/// superseded; ratios against the live policy would be meaningless.
class StaleSnapshotError : public Error {
  public:
    using Error::Error;
};

}  // namespace remex
