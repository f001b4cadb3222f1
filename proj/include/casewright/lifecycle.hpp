#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace casewright {

/// Element families that own a lifecycle. Tasks and stages share one table,
/// milestones and event listeners share another.
enum class LifecycleKind : std::uint8_t {
  case_plan,
  task,
  stage,
  milestone,
  event_listener,
  file_item,
  file_container,
};

/// `absent` is the pseudo-state before `create` (and after a case file item
/// is deleted); it never appears as the state of a live plan item.
enum class LifecycleState : std::uint8_t {
  absent,
  available,
  enabled,
  disabled,
  active,
  suspended,
  failed,
  completed,
  terminated,
  closed,
  occurred,
};

/// Standard plan-item and case-file events, followed by the two engine-local
/// history marks (`claim`, `tick`) that are recorded in the event log but are
/// not standard events and never appear in a transition table.
enum class EventName : std::uint8_t {
  create,
  start,
  enable,
  manualStart,
  disable,
  reenable,
  suspend,
  resume,
  occur,
  parentSuspend,
  parentResume,
  reactivate,
  complete,
  terminate,
  exit,
  fault,
  close,
  replace,
  update,
  delete_,
  addReference,
  removeReference,
  addChild,
  removeChild,
  claim,
  tick,
};

enum class Initiator : std::uint8_t { worker, engine };

inline constexpr std::size_t kLifecycleKindCount = 7;
inline constexpr std::size_t kLifecycleStateCount = 11;
inline constexpr std::size_t kEventNameCount = 26;

std::string_view to_string(LifecycleKind kind);
std::string_view to_string(LifecycleState state);
std::string_view to_string(EventName event);
std::optional<LifecycleKind> lifecycle_kind_from_string(std::string_view text);
std::optional<LifecycleState> lifecycle_state_from_string(std::string_view text);
std::optional<EventName> event_name_from_string(std::string_view text);

std::span<const LifecycleKind> all_lifecycle_kinds();
std::span<const LifecycleState> all_lifecycle_states();
std::span<const EventName> all_event_names();

bool is_standard_event(EventName event);
bool is_case_file_event(EventName event);
bool is_terminal(LifecycleKind kind, LifecycleState state);

struct Transition {
  LifecycleKind kind;
  LifecycleState from;
  EventName event;
  /// Empty means "restore the pre-suspend state".
  std::optional<LifecycleState> to;
  bool worker;
};

/// The encoded standard-event state machines. Pure and immutable.
class TransitionTable {
 public:
  static const TransitionTable& standard();

  const Transition* find(LifecycleKind kind, LifecycleState from,
                         EventName event) const;
  std::span<const Transition> entries() const { return entries_; }

  /// Events flagged in the case-worker column, per kind.
  bool worker_initiated(LifecycleKind kind, EventName event) const;

  /// Conformance fixture: list of {kind, from, event, to, worker}.
  nlohmann::json to_json() const;

 private:
  TransitionTable();
  std::vector<Transition> entries_;
};

/// Successor state for a legal (kind, from, event) triple; throws
/// IllegalTransition otherwise. `pre_suspend` resolves restore edges
/// (resume / parentResume) and defaults to `active`.
LifecycleState apply_transition(
    LifecycleKind kind, LifecycleState from, EventName event,
    std::optional<LifecycleState> pre_suspend = std::nullopt);

std::vector<EventName> allowed_events(LifecycleKind kind, LifecycleState from,
                                      Initiator actor);

}  // namespace casewright
