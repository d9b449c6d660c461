#include "bitcal/error.hpp"

namespace bitcal {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidDistribution: return "invalid-distribution";
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kSourceFailure: return "source-failure";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kUnsupportedVersion: return "unsupported-version";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kEmptyRun: return "empty-run";
    case ErrorKind::kInvalidGrouping: return "invalid-grouping";
    case ErrorKind::kUndefinedInterval: return "undefined-interval";
  }
  return "unknown";
}

}  // namespace bitcal
