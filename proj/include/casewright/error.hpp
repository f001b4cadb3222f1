#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace casewright {

enum class ErrorCode {
  syntax_error,
  schema_violation,
  unresolved_reference,
  duplicate_id,
  invalid_model,
  illegal_transition,
  cascade_limit_exceeded,
  permission_denied,
  not_claimed,
  required_incomplete,
  no_such_path,
  not_a_container,
  not_in_scope,
  scope_not_active,
  already_planned,
  unknown_target,
  missing_reference,
  type_mismatch,
  sequence_gap,
  corrupt_log,
  not_found,
  invalid_argument,
  io_error,
};

/// CamelCase name used in diagnostics, HTTP bodies and scenario scripts.
std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> error_code_from_string(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failures that can point at a location in the input text.
class ParseError : public Error {
 public:
  ParseError(ErrorCode code, const std::string& message, std::size_t position)
      : Error(code, message + " at offset " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace casewright
