#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "casewright/case_file.hpp"
#include "casewright/expression.hpp"
#include "casewright/lifecycle.hpp"
#include "casewright/model.hpp"

namespace casewright {

inline constexpr std::string_view kEngineActor = "engine";
inline constexpr std::size_t kCascadeLimit = 10000;

/// One standard event occurrence as recorded in the log.
struct Event {
  std::uint64_t seq = 0;
  std::string source;
  std::string name;
  std::string actor;
  std::uint64_t tick = 0;
  nlohmann::json payload;  // null when absent

  nlohmann::json to_json() const;
  /// Log line: sorted-key compact JSON, no trailing newline.
  std::string to_line() const;
  static Event from_json(const nlohmann::json& j);
  friend bool operator==(const Event&, const Event&) = default;
};

struct Actor {
  std::string worker;
  std::set<std::string> roles;
};

struct ItemInstance {
  std::string id;
  ItemIndex def = 0;
  LifecycleState state = LifecycleState::available;
  std::uint32_t repetition_index = 0;
  std::optional<LifecycleState> pre_suspend;
  bool suspended_by_parent = false;
  bool discretionary_origin = false;
  bool started = false;
  std::optional<std::uint32_t> parent;
  std::vector<std::uint32_t> children;
  std::string claimed_by;
  std::optional<std::uint64_t> deadline;

  friend bool operator==(const ItemInstance&, const ItemInstance&) = default;
};

struct SentryState {
  std::set<std::uint32_t> observed;
  bool armed = false;
  friend bool operator==(const SentryState&, const SentryState&) = default;
};

/// External work record for a started process task.
struct WorkItem {
  std::string task;
  std::string process_key;
  std::string status;  // open | completed | failed | cancelled
  std::string token;
  friend bool operator==(const WorkItem&, const WorkItem&) = default;
};

struct ParentLink {
  std::string instance;
  std::string task;
  friend bool operator==(const ParentLink&, const ParentLink&) = default;
};

/// Requests that cross instance boundaries, drained by the runtime after
/// each stimulus.
struct Outbound {
  enum class Kind { spawn_case, terminate_case, notify_parent } kind;
  std::string instance;  // child id (spawn/terminate) or parent id (notify)
  std::string task;      // case task instance on the parent side
  std::string model;     // spawn only
};

/// A running case. Value type: copying yields an independent instance that
/// shares the immutable model. Every mutating call is one stimulus; it either
/// applies completely (cascade run to quiescence) or throws and leaves the
/// instance untouched.
class CaseInstance {
 public:
  struct State {
    std::vector<ItemInstance> items;  // [0] is the case plan
    CaseFileState case_file;
    std::map<std::pair<SentryIndex, std::uint32_t>, SentryState> sentries;
    std::uint64_t seq = 0;
    std::uint64_t clock = 0;
    std::map<std::string, std::uint32_t> counters;
    std::map<std::string, std::string> sub_cases;
    std::map<std::string, WorkItem> work_items;
    std::optional<ParentLink> parent;
    friend bool operator==(const State&, const State&) = default;
  };

  /// Throws InvalidModel when the model has error diagnostics.
  static CaseInstance create(std::shared_ptr<const CaseModel> model,
                             std::string instance_id,
                             std::optional<ParentLink> parent = std::nullopt);

  /// Rebuilds from a canonical snapshot (no log attached).
  static CaseInstance from_snapshot(std::shared_ptr<const CaseModel> model,
                                    const nlohmann::json& snapshot);

  const std::string& id() const { return id_; }
  const CaseModel& model() const { return *model_; }
  const std::shared_ptr<const CaseModel>& model_ptr() const { return model_; }
  const State& state() const { return state_; }
  LifecycleState case_state() const { return state_.items[0].state; }
  std::uint64_t last_seq() const { return state_.seq; }
  std::uint64_t clock() const { return state_.clock; }

  const std::vector<Event>& log() const { return log_; }
  void set_log(std::vector<Event> log) { log_ = std::move(log); }

  const ItemInstance* find(std::string_view instance_id) const;
  std::vector<const ItemInstance*> instances_of(std::string_view def_id) const;
  LifecycleKind lifecycle_kind(const ItemInstance& item) const;

  // Stimuli. Each returns the events it appended.
  std::vector<Event> worker_action(const Actor& actor, const std::string& target,
                                   const std::string& action,
                                   const nlohmann::json& payload = nullptr);
  std::vector<Event> case_file_op(const Actor& actor, const std::string& op,
                                  const std::string& path,
                                  const nlohmann::json& payload = nullptr);
  std::vector<Event> plan(const Actor& actor, const std::string& scope,
                          const std::string& entry);
  std::vector<Event> advance_clock(std::uint64_t ticks);
  /// Runs the stimulus described by a head event without permission checks.
  /// Used by replay and for engine-to-engine messages (sub-case completion).
  std::vector<Event> dispatch(const Event& head);

  /// Worker actions the actor could perform on `target` right now; every
  /// listed action passes the same checks worker_action applies.
  std::vector<std::string> available_actions(const Actor& actor,
                                             const std::string& target) const;
  bool may_plan(const Actor& actor, const std::string& scope,
                const std::string& entry) const;

  /// Views: summary, items, milestones, case_file, plannable, history.
  nlohmann::json query(std::string_view view, const Actor* actor = nullptr) const;

  /// Scope completion predicate (required items done, nothing running).
  bool completion_ready(std::uint32_t scope) const;

  nlohmann::json snapshot() const;
  std::string canonical_snapshot() const { return snapshot().dump(); }

  std::vector<Outbound> take_outbox();

 private:
  CaseInstance(std::shared_ptr<const CaseModel> model, std::string id);

  class Cascade;
  friend class Cascade;

  std::optional<std::uint32_t> resolve(std::string_view target) const;
  void check_worker_action(const Actor* actor, std::uint32_t target,
                           EventName action, const std::string& worker,
                           const nlohmann::json* payload) const;
  void check_plan(const Actor* actor, std::uint32_t scope,
                  const std::string& entry) const;
  std::vector<std::string> actions_for(const Actor* actor,
                                       std::uint32_t target) const;
  bool permitted(const Actor& actor, Permission p) const;

  std::shared_ptr<const CaseModel> model_;
  /// Compiled ifParts, indexed like model().sentries.
  std::shared_ptr<const std::vector<std::optional<Expression>>> if_parts_;
  std::string id_;
  State state_;
  std::vector<Event> log_;
  std::vector<Outbound> outbox_;
};

}  // namespace casewright
