#pragma once

#include <stdexcept>
#include <string>

namespace remaster {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition on a value passed by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Failure talking to the filesystem or decoding stored data.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace remaster
