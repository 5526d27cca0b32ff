#ifndef MARS_ERRORS_HPP_
#define MARS_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace mars {

// Unknown ids, broken parent links.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Values outside their admissible range (rewards, token ids, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation invoked outside its domain (root where non-root required, empty input).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mars

#endif  // MARS_ERRORS_HPP_
