#ifndef PACFL_ERRORS_H_
#define PACFL_ERRORS_H_

#include <stdexcept>
#include <string>

namespace pacfl {

// Root of the library's exception hierarchy. Every error raised by pacfl
// derives from it, so callers can catch one type at a boundary.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes, ranks or parameter counts that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite or otherwise unusable numeric input.
class InvalidData : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class PartitionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Re-clustering disturbed the co-membership of already federated clients.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace pacfl

#endif  // PACFL_ERRORS_H_
