#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "casewright/model.hpp"

namespace casewright {

enum class Severity { error, warning };

std::string_view to_string(Severity s);

struct Diagnostic {
  Severity severity = Severity::error;
  std::string element;
  std::string rule;
  std::string message;

  /// `error RULE_X element: message`
  std::string to_string() const;
  nlohmann::json to_json() const;
  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

/// Structural and applicability checks. Pure; diagnostics come back in
/// model document order.
std::vector<Diagnostic> validate_model(const CaseModel& model);

bool has_errors(const std::vector<Diagnostic>& diagnostics);

}  // namespace casewright
