#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparsemask {

/// Shapes of two operands (images, masks, maps) do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An argument lies outside the operation's domain (class id, count, sigma...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Inconsistent or unparseable configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The oracle's query budget is spent; `used` stays at the limit.
class BudgetError : public std::runtime_error {
 public:
  BudgetError(std::size_t limit)
      : std::runtime_error("query budget exhausted (limit " + std::to_string(limit) + ")"),
        limit_(limit) {}
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t limit_;
};

/// Network-level failure talking to a remote oracle, after all retries.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, int attempts)
      : std::runtime_error(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// A peer answered, but not in the expected wire format.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An internal invariant was found broken.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace sparsemask
