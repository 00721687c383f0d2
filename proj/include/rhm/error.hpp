#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rhm {

enum class ErrorCode {
  invalid_params,
  unknown_tuple,
  unsupported_construction,
  cap_exceeded,
  out_of_range,
  degenerate,
  divergence,
  config,
  parse,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_params: return "invalid-params";
    case ErrorCode::unknown_tuple: return "unknown-tuple";
    case ErrorCode::unsupported_construction: return "unsupported-construction";
    case ErrorCode::cap_exceeded: return "cap-exceeded";
    case ErrorCode::out_of_range: return "out-of-range";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::config: return "config";
    case ErrorCode::parse: return "parse";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it onto an exit status and a machine-readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace rhm
