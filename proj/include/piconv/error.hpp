#pragma once

#include <stdexcept>
#include <string>

namespace piconv {

/// Broad failure class; the CLI maps `validation` to exit status 1 and the
/// rest to exit status 2.
enum class ErrorKind {
  validation,
  shape,
  tape,
  numeric,
  io,
  corrupt,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

struct TapeError : Error {
  explicit TapeError(const std::string& what) : Error(ErrorKind::tape, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::numeric, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct CorruptError : Error {
  explicit CorruptError(const std::string& what)
      : Error(ErrorKind::corrupt, what) {}
};

}  // namespace piconv
