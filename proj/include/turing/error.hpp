#ifndef TURING_ERROR_HPP
#define TURING_ERROR_HPP

#include <stdexcept>
#include <string>

namespace turing {

// Base for everything the library throws on purpose. The CLI maps the three
// families below onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition or invariant violated by caller-supplied data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown (zero iterate, non-finite covariance, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class TensorIoErrc {
  OpenFailed,
  WriteFailed,
  BadMagic,
  UnsupportedVersion,
  Truncated,
  DimensionOverflow,
  TrailingBytes,
};

const char* to_string(TensorIoErrc code);

class TensorIoError : public IoError {
 public:
  TensorIoError(TensorIoErrc code, const std::string& detail)
      : IoError(std::string(to_string(code)) + ": " + detail), code_(code) {}
  TensorIoErrc code() const noexcept { return code_; }

 private:
  TensorIoErrc code_;
};

class PngError : public IoError {
 public:
  using IoError::IoError;
};

enum class ClassifierErrc {
  Transport,
  HttpStatus,
  MalformedBody,
  ShapeMismatch,
};

const char* to_string(ClassifierErrc code);

class ClassifierError : public Error {
 public:
  ClassifierError(ClassifierErrc code, const std::string& detail)
      : Error(std::string(to_string(code)) + ": " + detail), code_(code) {}
  ClassifierErrc code() const noexcept { return code_; }

 private:
  ClassifierErrc code_;
};

template <typename E = ValidationError>
inline void require(bool condition, const std::string& message) {
  if (!condition) throw E(message);
}

}  // namespace turing

#endif  // TURING_ERROR_HPP
