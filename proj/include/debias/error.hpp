#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace debias {

enum class ErrorCode {
  MALFORMED_RECORD,
  UNKNOWN_LABEL,
  DUPLICATE_ID,
  EMPTY_TEXT,
  CLASS_TOO_SMALL,
  INVALID_SPEC,
  OVERLAPPING_SPANS,
  SPAN_OUT_OF_RANGE,
  MALFORMED_ANNOTATION,
  MALFORMED_GAZETTEER,
  NON_FINITE_LOSS,
  MODEL_FORMAT,
  PROCESS_SPAWN_FAILED,
  PROTOCOL_VIOLATION,
  TIMEOUT,
  TOO_MANY_TOKENS,
  EMPTY_INPUT,
  LENGTH_MISMATCH,
  NONPOSITIVE_BASELINE,
  INVALID_CONFIG,
  MISSING_SEED,
  IO_ERROR,
};

constexpr std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MALFORMED_RECORD: return "MALFORMED_RECORD";
    case ErrorCode::UNKNOWN_LABEL: return "UNKNOWN_LABEL";
    case ErrorCode::DUPLICATE_ID: return "DUPLICATE_ID";
    case ErrorCode::EMPTY_TEXT: return "EMPTY_TEXT";
    case ErrorCode::CLASS_TOO_SMALL: return "CLASS_TOO_SMALL";
    case ErrorCode::INVALID_SPEC: return "INVALID_SPEC";
    case ErrorCode::OVERLAPPING_SPANS: return "OVERLAPPING_SPANS";
    case ErrorCode::SPAN_OUT_OF_RANGE: return "SPAN_OUT_OF_RANGE";
    case ErrorCode::MALFORMED_ANNOTATION: return "MALFORMED_ANNOTATION";
    case ErrorCode::MALFORMED_GAZETTEER: return "MALFORMED_GAZETTEER";
    case ErrorCode::NON_FINITE_LOSS: return "NON_FINITE_LOSS";
    case ErrorCode::MODEL_FORMAT: return "MODEL_FORMAT";
    case ErrorCode::PROCESS_SPAWN_FAILED: return "PROCESS_SPAWN_FAILED";
    case ErrorCode::PROTOCOL_VIOLATION: return "PROTOCOL_VIOLATION";
    case ErrorCode::TIMEOUT: return "TIMEOUT";
    case ErrorCode::TOO_MANY_TOKENS: return "TOO_MANY_TOKENS";
    case ErrorCode::EMPTY_INPUT: return "EMPTY_INPUT";
    case ErrorCode::LENGTH_MISMATCH: return "LENGTH_MISMATCH";
    case ErrorCode::NONPOSITIVE_BASELINE: return "NONPOSITIVE_BASELINE";
    case ErrorCode::INVALID_CONFIG: return "INVALID_CONFIG";
    case ErrorCode::MISSING_SEED: return "MISSING_SEED";
    case ErrorCode::IO_ERROR: return "IO_ERROR";
  }
  return "UNKNOWN";
}

// Domain error carrying a stable code; what() is "CODE: message".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(code_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace debias
