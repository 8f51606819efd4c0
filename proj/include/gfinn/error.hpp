#pragma once

#include <stdexcept>
#include <string>

namespace gfinn {

// Error categories map one-to-one onto the C API status codes.
enum class ErrorKind {
  kConfig,     // invalid configuration, shape or layout mismatch
  kContract,   // caller violated an operation precondition
  kState,      // operation requested in the wrong order
  kDomain,     // state outside the physical domain of a problem
  kNumerical,  // non-finite values, failed factorization
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorKind::kContract, w) {}
};
struct StateError : Error {
  explicit StateError(const std::string& w) : Error(ErrorKind::kState, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::kDomain, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorKind::kNumerical, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::kIo, w) {}
};

}  // namespace gfinn
