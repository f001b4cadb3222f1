#pragma once

#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "casewright/model.hpp"

namespace casewright {

/// Parses the native JSON model format. Throws ParseError (SyntaxError) for
/// malformed JSON and Error with SchemaViolation / UnresolvedReference /
/// DuplicateId for documents that are well-formed but invalid.
CaseModel parse_model(std::string_view text);
CaseModel parse_model_document(const nlohmann::json& document);

/// Canonical document for a model; `parse_model(serialize_model(m)) == m`.
nlohmann::ordered_json serialize_model(const CaseModel& model);

std::shared_ptr<const CaseModel> load_model_file(const std::string& path);

}  // namespace casewright
