#include "kbforge/kbcore/error.hpp"

namespace kbforge {

std::string_view errorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kData: return "data";
    case ErrorKind::kNotFound: return "not_found";
    case ErrorKind::kConflict: return "conflict";
  }
  return "unknown";
}

}  // namespace kbforge
