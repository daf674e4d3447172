#pragma once

#include <stdexcept>
#include <string>

namespace multiver {

enum class ErrorCode {
  MALFORMED_RECORD,
  DUPLICATE_ID,
  IO_FAILURE,
  EMPTY_TEXT,
  PROVIDER_FAILURE,
  MISSING_AGENT,
  BAD_WEIGHTS,
  WRONG_ARITY,
  MISSING_LABEL,
  EMPTY_INPUT,
  INVALID_SIGNATURE,
  INVALID_CONFIG,
};

const char* to_string(ErrorCode code);

// Load-time and contract violations surface as exceptions; per-sample
// pipeline degradations go through diagnostics instead (see engine.hpp).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace multiver
