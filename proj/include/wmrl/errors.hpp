#pragma once

#include <stdexcept>
#include <string>

namespace wmrl {

// Raised when reset() cannot find an instance satisfying the config.
class GenerationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by step() on an episode that already ended.
class TerminatedStateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VocabularyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A forward or backward pass produced NaN/Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wmrl
