#pragma once

#include <stdexcept>
#include <string>

namespace dystop {

/// Configuration value missing, unknown or out of range. The message names the key.
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

/// Precondition violated on an operation input (empty histogram, dimension mismatch, ...).
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A link with zero rate cannot carry a model; the pair must not be used as neighbors.
class LinkUnavailable : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// NaN or Inf appeared in a model or loss.
class NonFiniteError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace dystop
