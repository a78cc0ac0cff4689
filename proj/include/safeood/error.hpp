#pragma once

#include <stdexcept>
#include <string>

namespace safeood {

enum class ErrorCode {
  invalid_argument,
  precondition,
  structural,             // malformed layer graphs, schema violations
  unsupported_backbone,   // no SAFE layer matches the pattern
  lookup,                 // unknown layer id, missing file referenced by a manifest
  degenerate_box,
  degenerate_input,
  numeric,
  io,
  parse,
  training_failure,
  evaluation_degenerate,
  config,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool cond, ErrorCode code, const std::string& message) {
  if (!cond) fail(code, message);
}

}  // namespace safeood
