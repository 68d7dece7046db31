#ifndef VSDOA_ERRORS_HPP
#define VSDOA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace vsdoa {

// Root of every error thrown by the library. The CLI maps each subclass to a
// distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or violated precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Mismatched widths or shapes between a model, a batch and its labels.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file: bad magic or unparsable header.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Optimization diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace vsdoa

#endif  // VSDOA_ERRORS_HPP
