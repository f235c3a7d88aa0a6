#pragma once

#include <stdexcept>
#include <string>

namespace detlab {

// Invalid input: bad config value, malformed record, violated precondition.
// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss or metric during training. The CLI maps this to exit code 3.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace detlab
