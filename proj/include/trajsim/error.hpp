#ifndef TRAJSIM_ERROR_HPP_
#define TRAJSIM_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace trajsim {

// Invalid input data or a violated precondition. CLI exit code 1.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or corrupted artifact file.
class FormatError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Bad command line. CLI exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace trajsim

#endif  // TRAJSIM_ERROR_HPP_
