#pragma once

#include <stdexcept>
#include <string>

namespace share {

// Base of every error thrown by the toolkit. The subclasses name the failure
// category; callers that only care about "it failed" catch share::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class DegenerateRangeError : public Error { using Error::Error; };
class BoundsError : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class UnsupportedError : public Error { using Error::Error; };
class SpecError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DivergenceError : public Error { using Error::Error; };

}  // namespace share
