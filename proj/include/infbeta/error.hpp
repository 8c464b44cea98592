#pragma once

#include <stdexcept>
#include <string>

namespace infbeta {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
  using Error::Error;
};

// Parameter values that produce non-finite likelihood quantities.
class InvalidParameterError : public Error {
public:
  using Error::Error;
};

// Singular or ill-conditioned linear system; `block` names the parameter
// block (rho, beta/gamma, ...) whose design is collinear.
class EstimationError : public Error {
public:
  EstimationError(std::string block, const std::string& what)
      : Error(block + ": " + what), block_(std::move(block)) {}
  const std::string& block() const noexcept { return block_; }

private:
  std::string block_;
};

// Data that cannot identify a component (e.g. no observation at c).
class DegenerateDataError : public Error {
public:
  using Error::Error;
};

class NonConvergenceError : public Error {
public:
  using Error::Error;
};

// Bad command-line usage, bad config or mismatched model/data.
class UsageError : public Error {
public:
  using Error::Error;
};

// Malformed CSV input or out-of-range responses.
class DataError : public Error {
public:
  using Error::Error;
};

class VersionError : public Error {
public:
  using Error::Error;
};

} // namespace infbeta
