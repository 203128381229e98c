#pragma once

#include <stdexcept>
#include <string>

namespace s2g {

// Base for every error raised by the library. Callers that only need to
// report can catch this; callers that branch on the failure catch the
// concrete subclass and inspect its kind().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace s2g
