#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace arena3d {

enum class ErrorCode {
  invalid_argument,
  unsorted_input,
  disconnected_graph,
  no_eligible_pair,
  validation_failure,
  storage_full,
  io_error,
  checksum_mismatch,
  unknown_kind,
  parse_error,
  segment_empty,
  insufficient_data,
  config_invalid,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::unsorted_input: return "unsorted-input";
    case ErrorCode::disconnected_graph: return "disconnected-graph";
    case ErrorCode::no_eligible_pair: return "no-eligible-pair";
    case ErrorCode::validation_failure: return "validation-failure";
    case ErrorCode::storage_full: return "storage-full";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::checksum_mismatch: return "checksum-mismatch";
    case ErrorCode::unknown_kind: return "unknown-kind";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::segment_empty: return "segment-empty";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::config_invalid: return "config-invalid";
  }
  return "unknown";
}

/// Exception carrying a stable machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace arena3d
