#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace artrack {

// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file or byte stream.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset);
  explicit FormatError(const std::string& what);

  // Byte offset, or 1-based line number for text formats, where parsing failed.
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_ = 0;
};

// Degenerate or ill-conditioned geometric configuration.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// A point at or behind the camera plane.
class ProjectionError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied parameter outside its documented domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Synthetic scene violates its frustum or size bounds.
class SceneError : public Error {
 public:
  using Error::Error;
};

// Registry record conflicts with an existing one.
class ConflictError : public Error {
 public:
  using Error::Error;
};

// Registry record fails field validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace artrack
