#pragma once

#include <stdexcept>
#include <string>

namespace annoclust {

// Every engine failure derives from Error so callers (the HTTP layer, the CLI)
// can map the concrete kind to a status code or exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DuplicateIdError : public Error {
 public:
  using Error::Error;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

class InsufficientPointsError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

// Out-of-order or duplicate interaction within a grow session.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class StructureError : public Error {
 public:
  using Error::Error;
};

// Ratio with an empty denominator.
class UndefinedError : public Error {
 public:
  using Error::Error;
};

class BusyError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class Cancelled : public Error {
 public:
  using Error::Error;
};

// Raised by start_iteration once the m schedule is used up.
class ScheduleDone : public Error {
 public:
  using Error::Error;
};

}  // namespace annoclust
