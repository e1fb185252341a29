#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace coughtb {

// Base of every error raised by the library. The CLI maps the three
// families below (config, data, everything else) onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class FileNotFoundError : public DataError {
 public:
  explicit FileNotFoundError(const std::string& path)
      : DataError("file not found: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class MalformedWavError : public DataError {
 public:
  using DataError::DataError;
};

class UnsupportedEncodingError : public DataError {
 public:
  using DataError::DataError;
};

// Schema violation at a JSON field path such as "participants[3].age_years".
class SchemaError : public DataError {
 public:
  SchemaError(std::string field_path, const std::string& what)
      : DataError(field_path + ": " + what), field_path_(std::move(field_path)) {}
  const std::string& field_path() const { return field_path_; }

 private:
  std::string field_path_;
};

class InvariantViolation : public DataError {
 public:
  InvariantViolation(std::string invariant, const std::string& what)
      : DataError("invariant '" + invariant + "' violated: " + what),
        invariant_(std::move(invariant)) {}
  const std::string& invariant() const { return invariant_; }

 private:
  std::string invariant_;
};

class DanglingReferenceError : public DataError {
 public:
  using DataError::DataError;
};

class DuplicateIdError : public DataError {
 public:
  using DataError::DataError;
};

// A class is missing from training labels, or a binary evaluation has one class.
class SingleClassError : public DataError {
 public:
  using DataError::DataError;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class UnsupportedRateError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class EmptyInputError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Too many bootstrap resamples produced an undefined metric.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace coughtb
