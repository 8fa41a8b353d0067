#pragma once

#include <stdexcept>
#include <string>

namespace aden {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class NotARotation : public Error {
public:
  using Error::Error;
};

class DegenerateScene : public Error {
public:
  using Error::Error;
};

class MissingGroundTruth : public Error {
public:
  MissingGroundTruth() : Error("ground-truth logit requested but not present") {}
  using Error::Error;
};

class ShapeMismatch : public Error {
public:
  using Error::Error;
};

class LengthMismatch : public Error {
public:
  using Error::Error;
};

class DegenerateConfiguration : public Error {
public:
  using Error::Error;
};

class NumericalDivergence : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Malformed or unreadable serialized data.
class FormatError : public Error {
public:
  using Error::Error;
};

}  // namespace aden
