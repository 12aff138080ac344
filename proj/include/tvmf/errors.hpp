#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tvmf {

enum class ErrorKind { Dimension, Domain, Degenerate, Config, Numerical, Data, Format, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::Dimension, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::Domain, w) {}
};
struct DegenerateInputError : Error {
  explicit DegenerateInputError(const std::string& w) : Error(ErrorKind::Degenerate, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorKind::Numerical, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};

// Malformed or truncated binary file; offset is the byte position where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& w, std::size_t offset)
      : Error(ErrorKind::Format, w + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Process exit status for an error of the given kind: 1 config, 2 data, 3 numerical.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Numerical:
      return 3;
    case ErrorKind::Data:
    case ErrorKind::Format:
    case ErrorKind::Io:
      return 2;
    default:
      return 1;
  }
}

}  // namespace tvmf
