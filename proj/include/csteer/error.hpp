#pragma once

#include <stdexcept>
#include <string>

namespace csteer {

// Base class for every error raised by the library. Callers that only care
// about "something in csteer failed" catch this; the subclasses exist so tests
// and the CLI can tell configuration mistakes apart from corrupt files.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class MismatchError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace csteer
