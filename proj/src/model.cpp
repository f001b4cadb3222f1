#include "casewright/model.hpp"

#include <algorithm>
#include <array>
#include <utility>

namespace casewright {

namespace {

constexpr std::array<std::pair<ItemKind, std::string_view>, 8> kKindNames{{
    {ItemKind::stage, "stage"},
    {ItemKind::human_task_blocking, "human_task_blocking"},
    {ItemKind::human_task_nonblocking, "human_task_nonblocking"},
    {ItemKind::process_task, "process_task"},
    {ItemKind::case_task, "case_task"},
    {ItemKind::milestone, "milestone"},
    {ItemKind::timer_listener, "timer_listener"},
    {ItemKind::user_listener, "user_listener"},
}};

constexpr std::array<std::pair<Permission, std::string_view>, 7> kPermNames{{
    {Permission::plan, "plan"},
    {Permission::manual_activate, "manual_activate"},
    {Permission::suspend_resume, "suspend_resume"},
    {Permission::modify_case_file, "modify_case_file"},
    {Permission::close_case, "close_case"},
    {Permission::execute_tasks, "execute_tasks"},
    {Permission::reactivate, "reactivate"},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& t,
                         Enum e) {
  for (const auto& [v, n] : t) {
    if (v == e) return n;
  }
  return "?";
}

template <typename Enum, std::size_t N>
std::optional<Enum> value_of(
    const std::array<std::pair<Enum, std::string_view>, N>& t,
    std::string_view text) {
  for (const auto& [v, n] : t) {
    if (n == text) return v;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(ItemKind kind) { return name_of(kKindNames, kind); }
std::optional<ItemKind> item_kind_from_string(std::string_view text) {
  return value_of(kKindNames, text);
}
std::string_view to_string(Permission p) { return name_of(kPermNames, p); }
std::optional<Permission> permission_from_string(std::string_view text) {
  return value_of(kPermNames, text);
}

LifecycleKind lifecycle_kind_of(ItemKind kind) {
  switch (kind) {
    case ItemKind::stage:
      return LifecycleKind::stage;
    case ItemKind::milestone:
      return LifecycleKind::milestone;
    case ItemKind::timer_listener:
    case ItemKind::user_listener:
      return LifecycleKind::event_listener;
    default:
      return LifecycleKind::task;
  }
}

bool is_task(ItemKind kind) {
  return kind == ItemKind::human_task_blocking ||
         kind == ItemKind::human_task_nonblocking ||
         kind == ItemKind::process_task || kind == ItemKind::case_task;
}

bool is_human_task(ItemKind kind) {
  return kind == ItemKind::human_task_blocking ||
         kind == ItemKind::human_task_nonblocking;
}

bool is_listener(ItemKind kind) {
  return kind == ItemKind::timer_listener || kind == ItemKind::user_listener;
}

const PlanItemDefinition* CaseModel::find_item(std::string_view id) const {
  auto idx = item_index(id);
  return idx ? &items[*idx] : nullptr;
}

std::optional<ItemIndex> CaseModel::item_index(std::string_view id) const {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].id == id) return static_cast<ItemIndex>(i);
  }
  return std::nullopt;
}

std::optional<FragmentIndex> CaseModel::fragment_index(std::string_view id) const {
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    if (fragments[i].id == id) return static_cast<FragmentIndex>(i);
  }
  return std::nullopt;
}

std::optional<SentryIndex> CaseModel::sentry_index(std::string_view id) const {
  for (std::size_t i = 0; i < sentries.size(); ++i) {
    if (sentries[i].id == id) return static_cast<SentryIndex>(i);
  }
  return std::nullopt;
}

const CaseFileItemDef* CaseModel::find_case_file_item(std::string_view path) const {
  auto it = std::find_if(case_file.begin(), case_file.end(),
                         [&](const CaseFileItemDef& d) { return d.path == path; });
  return it == case_file.end() ? nullptr : &*it;
}

const RoleDef* CaseModel::find_role(std::string_view name) const {
  auto it = std::find_if(roles.begin(), roles.end(),
                         [&](const RoleDef& r) { return r.name == name; });
  return it == roles.end() ? nullptr : &*it;
}

std::set<std::string> CaseModel::case_refs() const {
  std::set<std::string> out;
  for (const auto& item : items) {
    if (item.kind == ItemKind::case_task && !item.case_ref.empty()) {
      out.insert(item.case_ref);
    }
  }
  return out;
}

}  // namespace casewright
