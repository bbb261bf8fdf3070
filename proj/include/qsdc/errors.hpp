#pragma once

#include <stdexcept>
#include <string>

namespace qsdc {

// Invalid shapes, out-of-range coordinates, bad parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input files. Subclasses let callers tell the failure modes apart.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadMagicError : public ParseError {
 public:
  using ParseError::ParseError;
};

class VersionMismatchError : public ParseError {
 public:
  using ParseError::ParseError;
};

class TruncatedError : public ParseError {
 public:
  using ParseError::ParseError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf reached a place where the data must be clean (fault-free
// references, bound extraction).
class DueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qsdc
