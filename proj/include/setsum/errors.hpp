#pragma once

#include <stdexcept>
#include <string>

namespace setsum {

// Tensor or argument shapes that do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed binary or text input (tensor files, model files, manifests).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failures: cannot open, cannot write.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration value or key. Carries the 1-based line number when the
// value came from a config file (0 otherwise).
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& message, std::size_t line = 0)
      : std::invalid_argument(line == 0 ? message
                                        : "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace setsum
