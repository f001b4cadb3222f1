#include "casewright/error.hpp"

#include <array>
#include <utility>

namespace casewright {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 23> kNames{{
    {ErrorCode::syntax_error, "SyntaxError"},
    {ErrorCode::schema_violation, "SchemaViolation"},
    {ErrorCode::unresolved_reference, "UnresolvedReference"},
    {ErrorCode::duplicate_id, "DuplicateId"},
    {ErrorCode::invalid_model, "InvalidModel"},
    {ErrorCode::illegal_transition, "IllegalTransition"},
    {ErrorCode::cascade_limit_exceeded, "CascadeLimitExceeded"},
    {ErrorCode::permission_denied, "PermissionDenied"},
    {ErrorCode::not_claimed, "NotClaimed"},
    {ErrorCode::required_incomplete, "RequiredIncomplete"},
    {ErrorCode::no_such_path, "NoSuchPath"},
    {ErrorCode::not_a_container, "NotAContainer"},
    {ErrorCode::not_in_scope, "NotInScope"},
    {ErrorCode::scope_not_active, "ScopeNotActive"},
    {ErrorCode::already_planned, "AlreadyPlanned"},
    {ErrorCode::unknown_target, "UnknownTarget"},
    {ErrorCode::missing_reference, "MissingReference"},
    {ErrorCode::type_mismatch, "TypeMismatch"},
    {ErrorCode::sequence_gap, "SequenceGap"},
    {ErrorCode::corrupt_log, "CorruptLog"},
    {ErrorCode::not_found, "NotFound"},
    {ErrorCode::invalid_argument, "InvalidArgument"},
    {ErrorCode::io_error, "IoError"},
}};

}  // namespace

std::string_view to_string(ErrorCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Unknown";
}

std::optional<ErrorCode> error_code_from_string(std::string_view name) {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return std::nullopt;
}

}  // namespace casewright
