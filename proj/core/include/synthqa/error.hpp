#pragma once

#include <stdexcept>
#include <string>

namespace synthqa {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration, detected before any work starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A path that cannot be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// An operation that would produce an empty artifact where one is required.
class EmptyOutputError : public Error {
 public:
  using Error::Error;
};

}  // namespace synthqa
