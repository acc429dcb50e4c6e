#pragma once

#include <stdexcept>
#include <string>

namespace o4d {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be opened or read.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Data violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A serialized file or run list is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BehindCameraError : public Error {
 public:
  using Error::Error;
};

// The oracle tracker needs fixture point ids and part labels.
class OracleUnavailableError : public Error {
 public:
  using Error::Error;
};

class MissingEmbeddingError : public Error {
 public:
  using Error::Error;
};

class UnknownPromptError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Wraps a failure inside one pipeline stage and names that stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "': " + what), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace o4d
