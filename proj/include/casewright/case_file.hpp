#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "casewright/lifecycle.hpp"

namespace casewright {

struct CaseFileEntry {
  bool exists = false;
  bool container = false;
  /// True for items declared in the model schema; false for children added
  /// dynamically through addChild.
  bool declared = false;
  std::set<std::string> children;
  std::set<std::string> references;
  std::uint64_t revision = 0;
  nlohmann::json value;

  friend bool operator==(const CaseFileEntry&, const CaseFileEntry&) = default;
};

/// The single case file of an instance: path -> entry.
class CaseFileState {
 public:
  CaseFileState() = default;

  void declare(const std::string& path, bool container);

  const CaseFileEntry* find(std::string_view path) const;
  bool exists(std::string_view path) const;
  const std::map<std::string, CaseFileEntry, std::less<>>& entries() const {
    return items_;
  }

  /// Applies one case-file operation and returns the path that sources the
  /// resulting standard event (the container for addChild/removeChild).
  /// `payload` carries "value" for create/replace/update and "reference" for
  /// the reference ops.
  std::string apply(EventName op, const std::string& path,
                    const nlohmann::json& payload);

  /// Checks `apply` preconditions without mutating.
  void check(EventName op, const std::string& path,
             const nlohmann::json& payload) const;

  LifecycleKind lifecycle_kind(const CaseFileEntry& entry) const {
    return entry.container ? LifecycleKind::file_container
                           : LifecycleKind::file_item;
  }

  nlohmann::json to_json() const;
  static CaseFileState from_json(const nlohmann::json& j);

  friend bool operator==(const CaseFileState&, const CaseFileState&) = default;

 private:
  std::map<std::string, CaseFileEntry, std::less<>> items_;
};

std::string parent_path(std::string_view path);

}  // namespace casewright
