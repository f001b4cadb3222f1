#include "casewright/lifecycle.hpp"

#include <algorithm>
#include <array>
#include <initializer_list>
#include <string>

#include "casewright/error.hpp"

namespace casewright {

namespace {

constexpr std::array<LifecycleKind, kLifecycleKindCount> kKinds{
    LifecycleKind::case_plan,  LifecycleKind::task,
    LifecycleKind::stage,      LifecycleKind::milestone,
    LifecycleKind::event_listener, LifecycleKind::file_item,
    LifecycleKind::file_container,
};

constexpr std::array<std::string_view, kLifecycleKindCount> kKindNames{
    "case", "task", "stage", "milestone", "listener", "fileItem",
    "fileContainer",
};

constexpr std::array<LifecycleState, kLifecycleStateCount> kStates{
    LifecycleState::absent,    LifecycleState::available,
    LifecycleState::enabled,   LifecycleState::disabled,
    LifecycleState::active,    LifecycleState::suspended,
    LifecycleState::failed,    LifecycleState::completed,
    LifecycleState::terminated, LifecycleState::closed,
    LifecycleState::occurred,
};

constexpr std::array<std::string_view, kLifecycleStateCount> kStateNames{
    "absent",    "available", "enabled",    "disabled", "active", "suspended",
    "failed",    "completed", "terminated", "closed",   "occurred",
};

constexpr std::array<EventName, kEventNameCount> kEvents{
    EventName::create,       EventName::start,
    EventName::enable,       EventName::manualStart,
    EventName::disable,      EventName::reenable,
    EventName::suspend,      EventName::resume,
    EventName::occur,        EventName::parentSuspend,
    EventName::parentResume, EventName::reactivate,
    EventName::complete,     EventName::terminate,
    EventName::exit,         EventName::fault,
    EventName::close,        EventName::replace,
    EventName::update,       EventName::delete_,
    EventName::addReference, EventName::removeReference,
    EventName::addChild,     EventName::removeChild,
    EventName::claim,        EventName::tick,
};

constexpr std::array<std::string_view, kEventNameCount> kEventNames{
    "create",       "start",        "enable",     "manualStart",
    "disable",      "reenable",     "suspend",    "resume",
    "occur",        "parentSuspend", "parentResume", "reactivate",
    "complete",     "terminate",    "exit",       "fault",
    "close",        "replace",      "update",     "delete",
    "addReference", "removeReference", "addChild", "removeChild",
    "claim",        "tick",
};

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::array<Enum, N>& values,
                           const std::array<std::string_view, N>& names,
                           std::string_view text) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == text) return values[i];
  }
  return std::nullopt;
}

using S = LifecycleState;
using E = EventName;
using K = LifecycleKind;

constexpr bool kWorker = true;
constexpr bool kEngine = false;

class Builder {
 public:
  explicit Builder(std::vector<Transition>& out) : out_(out) {}

  void add(K kind, std::initializer_list<S> from, E event,
           std::optional<S> to, bool worker) {
    for (S s : from) out_.push_back(Transition{kind, s, event, to, worker});
  }

 private:
  std::vector<Transition>& out_;
};

void add_task_or_stage(Builder& b, K kind) {
  const std::initializer_list<S> not_started{S::available, S::enabled,
                                             S::disabled, S::active};
  const std::initializer_list<S> live{S::available, S::enabled, S::disabled,
                                      S::active,    S::suspended, S::failed};
  b.add(kind, {S::absent}, E::create, S::available, kEngine);
  b.add(kind, {S::available}, E::start, S::active, kEngine);
  b.add(kind, {S::available}, E::enable, S::enabled, kWorker);
  b.add(kind, {S::enabled}, E::manualStart, S::active, kWorker);
  b.add(kind, {S::enabled}, E::disable, S::disabled, kWorker);
  b.add(kind, {S::disabled}, E::reenable, S::enabled, kWorker);
  b.add(kind, {S::active}, E::suspend, S::suspended, kWorker);
  b.add(kind, {S::suspended}, E::resume, std::nullopt, kWorker);
  b.add(kind, not_started, E::parentSuspend, S::suspended, kEngine);
  b.add(kind, {S::suspended}, E::parentResume, std::nullopt, kEngine);
  b.add(kind, {S::failed}, E::reactivate, S::active, kWorker);
  b.add(kind, {S::active}, E::complete, S::completed, kEngine);
  b.add(kind, live, E::terminate, S::terminated, kWorker);
  b.add(kind, live, E::exit, S::terminated, kEngine);
  b.add(kind, {S::active}, E::fault, S::failed, kEngine);
}

void add_milestone_or_listener(Builder& b, K kind) {
  b.add(kind, {S::absent}, E::create, S::available, kEngine);
  b.add(kind, {S::available}, E::occur, S::occurred, kEngine);
  b.add(kind, {S::available}, E::suspend, S::suspended, kWorker);
  b.add(kind, {S::suspended}, E::resume, S::available, kWorker);
  b.add(kind, {S::available, S::suspended}, E::terminate, S::terminated,
        kWorker);
}

void add_case(Builder& b) {
  const std::initializer_list<S> finished{S::suspended, S::completed,
                                          S::terminated, S::failed};
  b.add(K::case_plan, {S::absent}, E::create, S::active, kEngine);
  b.add(K::case_plan, {S::active}, E::suspend, S::suspended, kWorker);
  b.add(K::case_plan, finished, E::reactivate, S::active, kWorker);
  b.add(K::case_plan, {S::active}, E::complete, S::completed, kEngine);
  b.add(K::case_plan, {S::active, S::suspended, S::failed}, E::terminate,
        S::terminated, kWorker);
  b.add(K::case_plan, {S::active}, E::fault, S::failed, kEngine);
  b.add(K::case_plan, finished, E::close, S::closed, kWorker);
}

void add_file_item(Builder& b, K kind) {
  b.add(kind, {S::absent}, E::create, S::available, kWorker);
  for (E e : {E::replace, E::update, E::addReference, E::removeReference}) {
    b.add(kind, {S::available}, e, S::available, kWorker);
  }
  b.add(kind, {S::available}, E::delete_, S::absent, kWorker);
  if (kind == K::file_container) {
    b.add(kind, {S::available}, E::addChild, S::available, kWorker);
    b.add(kind, {S::available}, E::removeChild, S::available, kWorker);
  }
}

}  // namespace

std::string_view to_string(LifecycleKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}
std::string_view to_string(LifecycleState state) {
  return kStateNames[static_cast<std::size_t>(state)];
}
std::string_view to_string(EventName event) {
  return kEventNames[static_cast<std::size_t>(event)];
}

std::optional<LifecycleKind> lifecycle_kind_from_string(std::string_view text) {
  return lookup(kKinds, kKindNames, text);
}
std::optional<LifecycleState> lifecycle_state_from_string(
    std::string_view text) {
  return lookup(kStates, kStateNames, text);
}
std::optional<EventName> event_name_from_string(std::string_view text) {
  return lookup(kEvents, kEventNames, text);
}

std::span<const LifecycleKind> all_lifecycle_kinds() { return kKinds; }
std::span<const LifecycleState> all_lifecycle_states() { return kStates; }
std::span<const EventName> all_event_names() { return kEvents; }

bool is_standard_event(EventName event) {
  return event != EventName::claim && event != EventName::tick;
}

bool is_case_file_event(EventName event) {
  switch (event) {
    case E::create:
    case E::replace:
    case E::update:
    case E::delete_:
    case E::addReference:
    case E::removeReference:
    case E::addChild:
    case E::removeChild:
      return true;
    default:
      return false;
  }
}

bool is_terminal(LifecycleKind kind, LifecycleState state) {
  if (kind == K::file_item || kind == K::file_container) return false;
  return state == S::completed || state == S::terminated ||
         state == S::closed || state == S::occurred;
}

TransitionTable::TransitionTable() {
  Builder b(entries_);
  add_case(b);
  add_task_or_stage(b, K::task);
  add_task_or_stage(b, K::stage);
  add_milestone_or_listener(b, K::milestone);
  add_milestone_or_listener(b, K::event_listener);
  add_file_item(b, K::file_item);
  add_file_item(b, K::file_container);
}

const TransitionTable& TransitionTable::standard() {
  static const TransitionTable table;
  return table;
}

const Transition* TransitionTable::find(LifecycleKind kind, LifecycleState from,
                                        EventName event) const {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const Transition& t) {
                           return t.kind == kind && t.from == from &&
                                  t.event == event;
                         });
  return it == entries_.end() ? nullptr : &*it;
}

bool TransitionTable::worker_initiated(LifecycleKind kind,
                                       EventName event) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Transition& t) {
                       return t.kind == kind && t.event == event && t.worker;
                     });
}

nlohmann::json TransitionTable::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : entries_) {
    out.push_back({
        {"kind", to_string(t.kind)},
        {"from", to_string(t.from)},
        {"event", to_string(t.event)},
        {"to", t.to ? std::string(to_string(*t.to)) : std::string("restore")},
        {"worker", t.worker},
    });
  }
  return out;
}

LifecycleState apply_transition(LifecycleKind kind, LifecycleState from,
                                EventName event,
                                std::optional<LifecycleState> pre_suspend) {
  const Transition* t = TransitionTable::standard().find(kind, from, event);
  if (t == nullptr) {
    throw Error(ErrorCode::illegal_transition,
                "illegal transition: " + std::string(to_string(kind)) + " " +
                    std::string(to_string(from)) + " --" +
                    std::string(to_string(event)) + "-->");
  }
  if (t->to) return *t->to;
  return pre_suspend.value_or(LifecycleState::active);
}

std::vector<EventName> allowed_events(LifecycleKind kind, LifecycleState from,
                                      Initiator actor) {
  std::vector<EventName> out;
  for (const auto& t : TransitionTable::standard().entries()) {
    if (t.kind != kind || t.from != from) continue;
    if (actor == Initiator::worker && !t.worker) continue;
    if (std::find(out.begin(), out.end(), t.event) == out.end()) {
      out.push_back(t.event);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace casewright
