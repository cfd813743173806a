#pragma once

#include <stdexcept>
#include <string>

namespace ego3d {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract input (bad box, non-orthonormal rotation,
/// unknown view label, unparsable file).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input is well formed but outside the mathematical domain (depth <= 0,
/// non-positive scale factor).
class DomainError : public Error {
 public:
  using Error::Error;
};

class BehindCameraError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Backend unreachable, timed out, or returned a server error after all
/// retries were used.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// HTTP 429 after retries. Kept distinct so callers can slow down instead of
/// treating the backend as dead.
class RateLimitError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// Backend answered, but the payload does not match the wire schema.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// No observation of any reference class survived filtering.
class NoReferenceError : public Error {
 public:
  using Error::Error;
};

/// Option generation could not satisfy its constraints.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace ego3d
