#pragma once

#include <stdexcept>
#include <string>

namespace attnspec {

// Error classes map one-to-one onto CLI exit codes (see README).
enum class ErrorKind {
  Config = 2,      // invalid flags, ranges, variant definitions
  Data = 3,        // unreadable/malformed input files, non-finite values, single-class labels
  Structural = 4,  // shape/layout mismatches between records, matrices and models
  Numeric = 5,     // optimizer or numerical failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct StructuralError : Error {
  explicit StructuralError(const std::string& what) : Error(ErrorKind::Structural, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Structural: return "structural";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace attnspec
