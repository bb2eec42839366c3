#pragma once

#include <stdexcept>
#include <string>

namespace dual {

/// Root of the library's exception hierarchy. The CLI maps each category
/// onto a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularTriangular : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IndexOutOfVocabulary : public Error {
 public:
  using Error::Error;
};

class TapeMismatch : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

class StaleCache : public Error {
 public:
  using Error::Error;
};

class EmptyCandidateSet : public Error {
 public:
  using Error::Error;
};

class UnknownAd : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class MalformedLogEntry : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace dual
