#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "casewright/lifecycle.hpp"

namespace casewright {

enum class ItemKind : std::uint8_t {
  stage,
  human_task_blocking,
  human_task_nonblocking,
  process_task,
  case_task,
  milestone,
  timer_listener,
  user_listener,
};

std::string_view to_string(ItemKind kind);
std::optional<ItemKind> item_kind_from_string(std::string_view text);
LifecycleKind lifecycle_kind_of(ItemKind kind);
bool is_task(ItemKind kind);
bool is_human_task(ItemKind kind);
bool is_listener(ItemKind kind);

enum class Permission : std::uint8_t {
  plan,
  manual_activate,
  suspend_resume,
  modify_case_file,
  close_case,
  execute_tasks,
  reactivate,
};

std::string_view to_string(Permission p);
std::optional<Permission> permission_from_string(std::string_view text);

struct RoleDef {
  std::string name;
  std::set<Permission> permissions;
  friend bool operator==(const RoleDef&, const RoleDef&) = default;
};

enum class SourceKind : std::uint8_t { element, case_file, criterion };

struct OnPart {
  std::string source;
  /// Absent for criterion sources: the part is satisfied when that
  /// criterion fires.
  std::optional<EventName> event;
  SourceKind source_kind = SourceKind::element;
  friend bool operator==(const OnPart&, const OnPart&) = default;
};

using ItemIndex = std::uint32_t;
using SentryIndex = std::uint32_t;
using FragmentIndex = std::uint32_t;

enum class CriterionRole : std::uint8_t { entry, exit };

struct Sentry {
  std::string id;
  std::vector<OnPart> on_parts;
  std::optional<std::string> if_part;
  /// Owning plan item (0 is the case plan itself).
  ItemIndex owner = 0;
  CriterionRole role = CriterionRole::entry;
  friend bool operator==(const Sentry&, const Sentry&) = default;
};

struct DecoratorSet {
  bool auto_complete = false;
  bool manual_activation = false;
  bool required = false;
  bool repetition = false;
  friend bool operator==(const DecoratorSet&, const DecoratorSet&) = default;
};

/// Annotations present in the document on elements that cannot carry them
/// (case file items, plan fragments). Kept only so validation can report
/// them.
struct StrayAnnotations {
  bool planning_table = false;
  bool entry_criterion = false;
  bool exit_criterion = false;
  bool auto_complete = false;
  bool collapsed = false;
  bool manual_activation = false;
  bool repetition = false;
  bool required = false;
  bool any() const {
    return planning_table || entry_criterion || exit_criterion ||
           auto_complete || collapsed || manual_activation || repetition ||
           required;
  }
  friend bool operator==(const StrayAnnotations&,
                         const StrayAnnotations&) = default;
};

struct PlanningEntry {
  enum class Kind : std::uint8_t { item, fragment } kind = Kind::item;
  std::uint32_t index = 0;
  friend bool operator==(const PlanningEntry&, const PlanningEntry&) = default;
};

struct PlanningTable {
  std::vector<PlanningEntry> entries;
  std::set<std::string> authorized_roles;
  friend bool operator==(const PlanningTable&, const PlanningTable&) = default;
};

struct PlanItemDefinition {
  std::string id;
  std::string name;
  ItemKind kind = ItemKind::stage;
  std::vector<SentryIndex> entry_criteria;
  std::vector<SentryIndex> exit_criteria;
  DecoratorSet decorators;
  bool collapsed = false;
  std::vector<ItemIndex> children;
  std::optional<PlanningTable> planning_table;
  std::string case_ref;       // case_task
  std::string process_key;    // process_task
  std::uint64_t duration = 0; // timer_listener, in logical ticks
  bool discretionary = false;
  std::optional<ItemIndex> parent;
  /// Set for discretionary items that belong to a plan fragment.
  std::optional<FragmentIndex> fragment;
  friend bool operator==(const PlanItemDefinition&,
                         const PlanItemDefinition&) = default;
};

struct PlanFragmentDef {
  std::string id;
  std::string name;
  bool collapsed = false;
  std::vector<ItemIndex> items;
  StrayAnnotations stray;
  friend bool operator==(const PlanFragmentDef&,
                         const PlanFragmentDef&) = default;
};

struct CaseFileItemDef {
  std::string path;
  bool container = false;
  std::vector<std::uint32_t> children;
  std::optional<std::uint32_t> parent;
  StrayAnnotations stray;
  friend bool operator==(const CaseFileItemDef&,
                         const CaseFileItemDef&) = default;
};

/// The static case definition. Items, sentries, fragments and case file
/// items live in flat arenas in document order. `items[0]` is the case plan;
/// the case-level exit criteria, planning table and auto-complete flag are
/// stored on it. Immutable after parse.
struct CaseModel {
  std::string id;
  std::string name;
  std::vector<RoleDef> roles;
  std::vector<CaseFileItemDef> case_file;
  std::vector<PlanItemDefinition> items;
  std::vector<PlanFragmentDef> fragments;
  std::vector<Sentry> sentries;

  const PlanItemDefinition& plan() const { return items.front(); }
  const std::vector<SentryIndex>& case_exit_criteria() const {
    return plan().exit_criteria;
  }
  const std::optional<PlanningTable>& case_planning_table() const {
    return plan().planning_table;
  }
  bool auto_complete() const { return plan().decorators.auto_complete; }

  const PlanItemDefinition* find_item(std::string_view id) const;
  std::optional<ItemIndex> item_index(std::string_view id) const;
  std::optional<FragmentIndex> fragment_index(std::string_view id) const;
  std::optional<SentryIndex> sentry_index(std::string_view id) const;
  const CaseFileItemDef* find_case_file_item(std::string_view path) const;
  const RoleDef* find_role(std::string_view name) const;

  /// Ids of case_task targets, used to check the registry before running.
  std::set<std::string> case_refs() const;

  friend bool operator==(const CaseModel&, const CaseModel&) = default;
};

}  // namespace casewright
