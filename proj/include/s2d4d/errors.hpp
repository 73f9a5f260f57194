#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace s2d4d {

/// Coarse error classes; the CLI maps these onto process exit codes.
enum class ErrorKind {
  InvalidInput,     // malformed arguments or values
  Shape,            // dimension / topology mismatch
  Format,           // unparsable file or container
  Numeric,          // singularities, non-finite values, degenerate data
  Convergence,      // iterative method gave up
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidInputError : public Error {
 public:
  explicit InvalidInputError(const std::string& what) : Error(ErrorKind::InvalidInput, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::Shape, what) {}
};

class TopologyError : public Error {
 public:
  explicit TopologyError(const std::string& what) : Error(ErrorKind::Shape, what) {}
};

class DegenerateMotionError : public Error {
 public:
  explicit DegenerateMotionError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

class SingularityError : public Error {
 public:
  explicit SingularityError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

/// Parse failure with the offending location. `line` is 1-based, 0 when
/// the format is binary and only the byte offset is meaningful.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, std::size_t byte_offset, const std::string& msg)
      : Error(ErrorKind::Format, file + ":" + std::to_string(line) + " (byte " +
                                     std::to_string(byte_offset) + "): " + msg),
        file_(std::move(file)),
        line_(line),
        byte_offset_(byte_offset) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::string file_;
  std::size_t line_;
  std::size_t byte_offset_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

}  // namespace s2d4d
