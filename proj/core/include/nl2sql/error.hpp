#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nl2sql {

// Root of every exception thrown by the library. `kind()` is a stable,
// machine-readable tag used by the CLI when it reports errors as JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("IoError", message) {}
};

// Malformed input file (bad JSON line, wrong field type). Carries the
// 1-based line number when one is known.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::size_t line = 0)
      : Error("FormatError", line ? message + " (line " + std::to_string(line) + ")" : message),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A table violated one or more invariants. Each problem is reported
// separately so callers can list all of them.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& table_id, std::vector<std::string> problems);
  const std::string& table_id() const noexcept { return table_id_; }
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::string table_id_;
  std::vector<std::string> problems_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset)
      : Error("ParseError", message + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownColumn : public Error {
 public:
  explicit UnknownColumn(const std::string& message) : Error("UnknownColumn", message) {}
};

class TypeMismatch : public Error {
 public:
  explicit TypeMismatch(const std::string& message) : Error("TypeMismatch", message) {}
};

class InvalidQuery : public Error {
 public:
  explicit InvalidQuery(const std::string& message) : Error("InvalidQuery", message) {}
};

// MIN/MAX over an empty filtered row set.
class EmptyAggregate : public Error {
 public:
  explicit EmptyAggregate(const std::string& message) : Error("EmptyAggregate", message) {}
};

// A decoded token stream that does not form a valid query.
class StructureError : public Error {
 public:
  explicit StructureError(const std::string& message) : Error("StructureError", message) {}
};

class SamplingExhausted : public Error {
 public:
  explicit SamplingExhausted(const std::string& message) : Error("SamplingExhausted", message) {}
};

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& message) : Error("ShapeMismatch", message) {}
};

class NonFiniteValue : public Error {
 public:
  explicit NonFiniteValue(const std::string& message) : Error("NonFiniteValue", message) {}
};

class NonScalarLoss : public Error {
 public:
  explicit NonScalarLoss(const std::string& message) : Error("NonScalarLoss", message) {}
};

class EmptySequence : public Error {
 public:
  explicit EmptySequence(const std::string& message) : Error("EmptySequence", message) {}
};

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& message) : Error("EmptyInput", message) {}
};

class LengthMismatch : public Error {
 public:
  explicit LengthMismatch(const std::string& message) : Error("LengthMismatch", message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("ConfigError", message) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& message) : Error("VersionError", message) {}
};

class ChecksumError : public Error {
 public:
  explicit ChecksumError(const std::string& message) : Error("ChecksumError", message) {}
};

class MissingPrediction : public Error {
 public:
  explicit MissingPrediction(const std::string& message) : Error("MissingPrediction", message) {}
};

class UnknownTable : public Error {
 public:
  explicit UnknownTable(const std::string& message) : Error("UnknownTable", message) {}
};

}  // namespace nl2sql
