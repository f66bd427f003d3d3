#include "poe/errors.hpp"

namespace poe {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kSingularSchedule: return "singular-schedule";
    case ErrorKind::kInvalidComposition: return "invalid-composition";
    case ErrorKind::kGraphInconsistency: return "graph-inconsistency";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kIncompatibleExperts: return "incompatible-experts";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kDegeneratePopulation: return "degenerate-population";
    case ErrorKind::kDegenerateProduct: return "degenerate-product";
    case ErrorKind::kInvalidEnvelope: return "invalid-envelope";
    case ErrorKind::kInvalidConfig: return "invalid-config";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace poe
