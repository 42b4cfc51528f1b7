#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shrinkflow {

enum class ErrorCode {
  InvalidArgument,
  GridMismatch,
  GraphOverflow,
  Blowup,
  SelfIntersection,
  NoConvergence,
  SingularLinearization,
  BracketFailure,
  StiffODE,
  InvalidWindow,
  RangeError,
  HypothesisFail,
  NotGraphical,
  ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::GraphOverflow: return "GraphOverflow";
    case ErrorCode::Blowup: return "Blowup";
    case ErrorCode::SelfIntersection: return "SelfIntersection";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularLinearization: return "SingularLinearization";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::StiffODE: return "StiffODE";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::HypothesisFail: return "HypothesisFail";
    case ErrorCode::NotGraphical: return "NotGraphical";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace shrinkflow
