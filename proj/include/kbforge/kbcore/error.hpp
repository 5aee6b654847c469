#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kbforge {

enum class ErrorKind {
  kValidation,  // bad input or configuration
  kTransport,   // backend or service unreachable; retryable
  kProtocol,    // malformed response from a peer; not retryable
  kData,        // malformed or inconsistent artifact contents
  kNotFound,
  kConflict,
};

std::string_view errorKindName(ErrorKind kind);

class KbError : public std::runtime_error {
 public:
  KbError(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace kbforge
