#pragma once

#include <stdexcept>
#include <string>

namespace wildlab {

// Input outside the mathematical domain of an operation.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or out-of-range configuration.
class ConfigError : public DomainError {
 public:
  explicit ConfigError(const std::string& what) : DomainError(what) {}
};

// Fixed-point iteration failed to contract on the requested horizon.
class HorizonTooLarge : public DomainError {
 public:
  explicit HorizonTooLarge(const std::string& what) : DomainError(what) {}
};

}  // namespace wildlab
