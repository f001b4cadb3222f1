#include "casewright/instance.hpp"

#include <algorithm>
#include <functional>

#include "casewright/error.hpp"
#include "casewright/validate.hpp"

namespace casewright {

using nlohmann::json;
using S = LifecycleState;
using E = EventName;

// ---------------------------------------------------------------------------
// Event

json Event::to_json() const {
  json j{{"seq", seq}, {"source", source}, {"name", name}, {"actor", actor},
         {"tick", tick}};
  if (!payload.is_null()) j["payload"] = payload;
  return j;
}

std::string Event::to_line() const { return to_json().dump(); }

Event Event::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "event must be an object");
  Event e;
  try {
    e.seq = j.at("seq").get<std::uint64_t>();
    e.source = j.at("source").get<std::string>();
    e.name = j.at("name").get<std::string>();
    e.actor = j.at("actor").get<std::string>();
    e.tick = j.at("tick").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::invalid_argument, std::string("malformed event: ") + ex.what());
  }
  if (auto it = j.find("payload"); it != j.end()) e.payload = *it;
  return e;
}

namespace {

bool is_subcase_actor(std::string_view actor) { return actor.rfind("case:", 0) == 0; }

bool is_scope(const PlanItemDefinition& def, bool root) {
  return root || def.kind == ItemKind::stage;
}

Permission permission_for(EventName action, bool root, ItemKind kind) {
  switch (action) {
    case E::suspend:
    case E::resume:
      return Permission::suspend_resume;
    case E::reactivate:
      return Permission::reactivate;
    case E::close:
      return Permission::close_case;
    case E::terminate:
      return root ? Permission::close_case : Permission::manual_activate;
    case E::complete:
      if (root) return Permission::close_case;
      return kind == ItemKind::stage ? Permission::manual_activate
                                     : Permission::execute_tasks;
    case E::claim:
    case E::occur:
    case E::fault:
      return Permission::execute_tasks;
    default:
      return Permission::manual_activate;
  }
}

bool has_token(const json& payload) {
  return payload.is_object() && payload.contains("token") && payload["token"].is_string();
}

std::string child_case_id(const std::string& parent, const std::string& task) {
  std::string t = task;
  std::replace(t.begin(), t.end(), '#', '_');
  return parent + "." + t;
}

[[noreturn]] void illegal(const std::string& message) {
  throw Error(ErrorCode::illegal_transition, message);
}

}  // namespace

// ---------------------------------------------------------------------------
// Cascade: the mutation machinery for a single stimulus.

class CaseInstance::Cascade {
 public:
  explicit Cascade(CaseInstance& ci) : ci_(ci), s_(ci.state_), m_(*ci.model_) {}

  template <typename F>
  static std::vector<Event> stimulus(CaseInstance& ci, F&& body) {
    State saved = ci.state_;
    const auto log_mark = ci.log_.size();
    const auto out_mark = ci.outbox_.size();
    try {
      Cascade c(ci);
      body(c);
      c.quiesce();
    } catch (...) {
      ci.state_ = std::move(saved);
      ci.log_.resize(log_mark);
      ci.outbox_.resize(out_mark);
      throw;
    }
    return {ci.log_.begin() + static_cast<std::ptrdiff_t>(log_mark), ci.log_.end()};
  }

  struct Origin {
    enum class Kind { item, file, criterion, clock } kind = Kind::item;
    std::uint32_t index = 0;  // definition (item) or sentry (criterion)
    std::string path;         // file
  };

  void emit(const std::string& source, EventName name, const std::string& actor,
            json payload, const Origin& origin) {
    if (++count_ > kCascadeLimit) {
      throw Error(ErrorCode::cascade_limit_exceeded,
                  "more than " + std::to_string(kCascadeLimit) +
                      " events in one stimulus; the model has a cycle");
    }
    Event e;
    e.seq = ++s_.seq;
    e.source = source;
    e.name = std::string(to_string(name));
    e.actor = actor;
    e.tick = s_.clock;
    e.payload = std::move(payload);
    ci_.log_.push_back(std::move(e));
    observe(origin, name);
  }

  LifecycleKind kind_of(std::uint32_t idx) const { return ci_.lifecycle_kind(s_.items[idx]); }
  const PlanItemDefinition& def_of(std::uint32_t idx) const { return m_.items[s_.items[idx].def]; }

  void transition(std::uint32_t idx, EventName ev, const std::string& actor,
                  json payload = nullptr) {
    const LifecycleKind kind = kind_of(idx);
    const S from = s_.items[idx].state;
    const S to = apply_transition(kind, from, ev, s_.items[idx].pre_suspend);
    {
      auto& it = s_.items[idx];
      if (ev == E::suspend || ev == E::parentSuspend) it.pre_suspend = from;
      if (ev == E::resume || ev == E::parentResume ||
          (idx == 0 && ev == E::reactivate)) {
        it.pre_suspend.reset();
        it.suspended_by_parent = false;
      }
      it.state = to;
      if (to == S::active) it.started = true;
    }
    emit(s_.items[idx].id, ev, actor, std::move(payload),
         {Origin::Kind::item, s_.items[idx].def, {}});

    const bool scope = is_scope(def_of(idx), idx == 0);
    if (scope && (ev == E::suspend || ev == E::parentSuspend)) suspend_children(idx);
    if (scope && (ev == E::resume || ev == E::parentResume ||
                  (idx == 0 && ev == E::reactivate && from == S::suspended))) {
      resume_children(idx);
    }
    if (idx == 0 && ev == E::reactivate) init_sentries(0, true);
    if (to == S::active && (from == S::available || from == S::enabled)) on_started(idx);
    if (to == S::active && from == S::failed) {
      if (auto w = s_.work_items.find(s_.items[idx].id); w != s_.work_items.end()) {
        w->second.status = "open";
        w->second.token.clear();
      }
    }
    if (from != to && is_terminal(kind, to)) on_ended(idx, to);
  }

  std::uint32_t create_item(ItemIndex def, std::uint32_t parent, bool discretionary,
                            const std::string& actor, json payload = nullptr) {
    const auto& d = m_.items[def];
    const auto n = ++s_.counters[d.id];
    ItemInstance it;
    it.id = n == 1 ? d.id : d.id + "#" + std::to_string(n);
    it.def = def;
    it.state = S::absent;
    it.discretionary_origin = discretionary;
    it.parent = parent;
    for (auto c : s_.items[parent].children) {
      if (s_.items[c].def == def) ++it.repetition_index;
    }
    if (d.kind == ItemKind::timer_listener) it.deadline = s_.clock + d.duration;
    const auto idx = static_cast<std::uint32_t>(s_.items.size());
    s_.items.push_back(std::move(it));
    s_.items[parent].children.push_back(idx);
    transition(idx, E::create, actor, std::move(payload));
    init_sentries(idx, false);
    return idx;
  }

  void init_sentries(std::uint32_t idx, bool exit_only) {
    const auto& d = def_of(idx);
    auto add = [&](SentryIndex s) {
      auto& st = s_.sentries[{s, idx}];
      st = SentryState{};
      const auto& sen = m_.sentries[s];
      if (sen.on_parts.empty() && sen.if_part && eval(s)) st.armed = true;
    };
    if (!exit_only) {
      for (auto s : d.entry_criteria) add(s);
    }
    for (auto s : d.exit_criteria) add(s);
  }

  void initial_rule(std::uint32_t idx) {
    const auto& d = def_of(idx);
    if (!d.entry_criteria.empty() || s_.items[idx].state != S::available) return;
    switch (kind_of(idx)) {
      case LifecycleKind::task:
      case LifecycleKind::stage:
        transition(idx, d.decorators.manual_activation ? E::enable : E::start,
                   std::string(kEngineActor));
        break;
      case LifecycleKind::milestone:
        transition(idx, E::occur, std::string(kEngineActor));
        break;
      default:
        break;
    }
  }

  void start_scope(std::uint32_t idx) {
    std::vector<std::uint32_t> created;
    for (auto c : def_of(idx).children) {
      created.push_back(create_item(c, idx, false, std::string(kEngineActor)));
    }
    for (auto n : created) initial_rule(n);
  }

  void on_started(std::uint32_t idx) {
    const auto& d = def_of(idx);
    if (is_scope(d, idx == 0)) {
      start_scope(idx);
      return;
    }
    const std::string id = s_.items[idx].id;
    if (d.kind == ItemKind::process_task) {
      s_.work_items[id] = WorkItem{id, d.process_key, "open", ""};
    } else if (d.kind == ItemKind::case_task) {
      const std::string child = child_case_id(ci_.id_, id);
      s_.sub_cases[id] = child;
      ci_.outbox_.push_back({Outbound::Kind::spawn_case, child, id, d.case_ref});
    }
  }

  void on_ended(std::uint32_t idx, S to) {
    const auto& d = def_of(idx);
    const std::string id = s_.items[idx].id;
    if (is_scope(d, idx == 0) && (to == S::completed || to == S::terminated)) {
      terminate_children(idx);
    }
    if (idx == 0 && to == S::completed && s_.parent) {
      ci_.outbox_.push_back({Outbound::Kind::notify_parent, s_.parent->instance,
                             s_.parent->task, {}});
    }
    if (to == S::terminated) {
      if (auto w = s_.work_items.find(id); w != s_.work_items.end() && w->second.status == "open") {
        w->second.status = "cancelled";
      }
      if (auto sc = s_.sub_cases.find(id); sc != s_.sub_cases.end()) {
        ci_.outbox_.push_back({Outbound::Kind::terminate_case, sc->second, id, {}});
      }
    }
  }

  void terminate_children(std::uint32_t idx) {
    const auto children = s_.items[idx].children;
    for (auto c : children) {
      if (!is_terminal(kind_of(c), s_.items[c].state)) {
        transition(c, E::terminate, std::string(kEngineActor));
      }
    }
  }

  void suspend_children(std::uint32_t idx) {
    const auto children = s_.items[idx].children;
    for (auto c : children) {
      const S st = s_.items[c].state;
      const LifecycleKind k = kind_of(c);
      EventName ev;
      if (k == LifecycleKind::task || k == LifecycleKind::stage) {
        if (st != S::available && st != S::enabled && st != S::disabled && st != S::active) continue;
        ev = E::parentSuspend;
      } else {
        if (st != S::available) continue;
        ev = E::suspend;
      }
      transition(c, ev, std::string(kEngineActor));
      s_.items[c].suspended_by_parent = true;
    }
  }

  void resume_children(std::uint32_t idx) {
    const auto children = s_.items[idx].children;
    for (auto c : children) {
      if (!s_.items[c].suspended_by_parent || s_.items[c].state != S::suspended) continue;
      const LifecycleKind k = kind_of(c);
      const bool task_like = k == LifecycleKind::task || k == LifecycleKind::stage;
      transition(c, task_like ? E::parentResume : E::resume, std::string(kEngineActor));
    }
  }

  // -- sentries -------------------------------------------------------------

  bool eval(SentryIndex s) const {
    const auto& expr = (*ci_.if_parts_)[s];
    if (!expr) return true;
    try {
      return evaluate_expression(*expr, EvaluationContext(s_.case_file));
    } catch (const Error&) {
      // A condition over data that is not there yet is simply not satisfied.
      return false;
    }
  }

  void observe(const Origin& o, EventName name) {
    if (o.kind == Origin::Kind::clock) return;
    for (auto& [key, st] : s_.sentries) {
      if (st.armed) continue;
      const Sentry& sen = m_.sentries[key.first];
      if (sen.on_parts.empty()) {
        if (o.kind == Origin::Kind::file && sen.if_part && eval(key.first)) st.armed = true;
        continue;
      }
      bool changed = false;
      for (std::uint32_t k = 0; k < sen.on_parts.size(); ++k) {
        const OnPart& part = sen.on_parts[k];
        bool match = false;
        switch (part.source_kind) {
          case SourceKind::element:
            match = o.kind == Origin::Kind::item && part.event == name &&
                    m_.items[o.index].id == part.source;
            break;
          case SourceKind::case_file:
            match = o.kind == Origin::Kind::file && part.event == name && o.path == part.source;
            break;
          case SourceKind::criterion:
            match = o.kind == Origin::Kind::criterion && m_.sentries[o.index].id == part.source;
            break;
        }
        if (match && st.observed.insert(k).second) changed = true;
      }
      if (changed && st.observed.size() == sen.on_parts.size()) {
        if (eval(key.first)) {
          st.armed = true;
        } else {
          st.observed.clear();
        }
      }
    }
  }

  bool live(const std::pair<SentryIndex, std::uint32_t>& key) const {
    const auto& it = s_.items[key.second];
    if (m_.sentries[key.first].role == CriterionRole::entry) {
      return it.state == S::available ||
             (it.state == S::suspended && it.pre_suspend == S::available);
    }
    return !is_terminal(kind_of(key.second), it.state);
  }

  bool eligible(const std::pair<SentryIndex, std::uint32_t>& key) const {
    const S st = s_.items[key.second].state;
    if (m_.sentries[key.first].role == CriterionRole::entry) return st == S::available;
    if (key.second == 0) return st == S::active || st == S::failed;
    switch (kind_of(key.second)) {
      case LifecycleKind::task:
      case LifecycleKind::stage:
        return st == S::available || st == S::enabled || st == S::disabled ||
               st == S::active || st == S::failed;
      default:
        return st == S::available;
    }
  }

  void prune() {
    for (auto it = s_.sentries.begin(); it != s_.sentries.end();) {
      it = live(it->first) ? std::next(it) : s_.sentries.erase(it);
    }
  }

  bool fire_first_armed() {
    for (auto& [key, st] : s_.sentries) {
      if (!st.armed || !eligible(key)) continue;
      const auto k = key;
      st = SentryState{};
      fire(k);
      return true;
    }
    return false;
  }

  void fire(std::pair<SentryIndex, std::uint32_t> key) {
    const Sentry& sen = m_.sentries[key.first];
    const std::uint32_t owner = key.second;
    const auto& d = def_of(owner);
    const LifecycleKind k = kind_of(owner);
    const std::string engine(kEngineActor);
    EventName ev;
    if (sen.role == CriterionRole::entry) {
      ev = k == LifecycleKind::milestone || k == LifecycleKind::event_listener
               ? E::occur
               : (d.decorators.manual_activation ? E::enable : E::start);
    } else {
      ev = (k == LifecycleKind::task || k == LifecycleKind::stage) ? E::exit : E::terminate;
    }
    emit(sen.id, ev, engine, json{{"owner", s_.items[owner].id}},
         {Origin::Kind::criterion, key.first, {}});
    transition(owner, ev, engine);
    if (sen.role == CriterionRole::entry && d.decorators.repetition && s_.items[owner].parent) {
      const auto parent = *s_.items[owner].parent;
      if (!is_terminal(kind_of(parent), s_.items[parent].state)) {
        create_item(s_.items[owner].def, parent, s_.items[owner].discretionary_origin, engine);
      }
    }
  }

  bool auto_complete_pass() {
    for (std::size_t i = s_.items.size(); i-- > 0;) {
      const auto idx = static_cast<std::uint32_t>(i);
      if (s_.items[idx].state != S::active) continue;
      const bool wants = idx == 0 ? m_.auto_complete()
                                  : (def_of(idx).kind == ItemKind::stage &&
                                     def_of(idx).decorators.auto_complete);
      if (wants && ci_.completion_ready(idx)) {
        transition(idx, E::complete, std::string(kEngineActor));
        return true;
      }
    }
    return false;
  }

  bool fire_due_timer() {
    for (std::uint32_t i = 0; i < s_.items.size(); ++i) {
      const auto& it = s_.items[i];
      if (it.deadline && it.state == S::available && *it.deadline <= s_.clock &&
          def_of(i).kind == ItemKind::timer_listener) {
        transition(i, E::occur, std::string(kEngineActor));
        return true;
      }
    }
    return false;
  }

  void quiesce() {
    for (;;) {
      prune();
      if (fire_first_armed()) continue;
      if (auto_complete_pass()) continue;
      if (fire_due_timer()) continue;
      break;
    }
  }

  // -- stimuli ----------------------------------------------------------------

  void worker(std::uint32_t target, EventName action, const std::string& actor,
              const json& payload) {
    ci_.check_worker_action(nullptr, target, action, actor, &payload);
    const auto& d = def_of(target);
    const std::string id = s_.items[target].id;
    switch (action) {
      case E::claim:
        emit(id, E::claim, actor, payload, {Origin::Kind::item, s_.items[target].def, {}});
        if (d.kind == ItemKind::human_task_nonblocking) {
          transition(target, E::complete, std::string(kEngineActor));
        } else {
          s_.items[target].claimed_by = actor;
        }
        return;
      case E::complete:
      case E::fault:
        transition(target, action, actor, payload);
        if (auto w = s_.work_items.find(id); w != s_.work_items.end() && target != 0) {
          w->second.status = action == E::complete ? "completed" : "failed";
          if (has_token(payload)) w->second.token = payload["token"].get<std::string>();
        }
        return;
      default:
        transition(target, action, actor, payload);
        return;
    }
  }

  void case_file(EventName op, const std::string& path, const std::string& actor,
                 const json& payload) {
    const S cs = s_.items[0].state;
    if (cs != S::active && cs != S::suspended) {
      illegal("case file is read-only while the case is " + std::string(to_string(cs)));
    }
    if (!is_case_file_event(op)) {
      throw Error(ErrorCode::invalid_argument,
                  "'" + std::string(to_string(op)) + "' is not a case file operation");
    }
    const std::string source = s_.case_file.apply(op, path, payload);
    json head = json::object();
    if (payload.is_object()) {
      if (payload.contains("value")) head["value"] = payload["value"];
      if (payload.contains("reference")) head["reference"] = payload["reference"];
    }
    if (op == E::addChild || op == E::removeChild) head["child"] = path;
    if (head.empty()) head = nullptr;
    emit(source, op, actor, std::move(head), {Origin::Kind::file, 0, source});
  }

  void plan(std::uint32_t scope, const std::string& entry, const std::string& actor) {
    ci_.check_plan(nullptr, scope, entry);
    const auto& sdef = def_of(scope);
    const std::uint32_t parent =
        is_human_task(sdef.kind) && scope != 0 ? *s_.items[scope].parent : scope;
    const auto& table = *sdef.planning_table;
    std::vector<ItemIndex> defs;
    for (const auto& e : table.entries) {
      if (e.kind == PlanningEntry::Kind::item && m_.items[e.index].id == entry) {
        defs.push_back(e.index);
      } else if (e.kind == PlanningEntry::Kind::fragment && m_.fragments[e.index].id == entry) {
        defs = m_.fragments[e.index].items;
      }
    }
    std::vector<std::uint32_t> created;
    for (std::size_t i = 0; i < defs.size(); ++i) {
      if (i == 0) {
        created.push_back(create_item(defs[i], parent, true, actor,
                                      json{{"scope", s_.items[scope].id}, {"entry", entry}}));
      } else {
        created.push_back(create_item(defs[i], parent, true, std::string(kEngineActor)));
      }
    }
    for (auto n : created) initial_rule(n);
  }

  void clock(std::uint64_t ticks) {
    if (ticks == 0) throw Error(ErrorCode::invalid_argument, "clock advance must be positive");
    s_.clock += ticks;
    emit("clock", E::tick, std::string(kEngineActor), json{{"ticks", ticks}},
         {Origin::Kind::clock, 0, {}});
  }

  void create_root() {
    ItemInstance root;
    root.id = m_.plan().id;
    root.def = 0;
    root.state = S::absent;
    s_.items.push_back(std::move(root));
    s_.counters[m_.plan().id] = 1;
    transition(0, E::create, std::string(kEngineActor));
    init_sentries(0, false);
    on_started(0);
  }

 private:
  CaseInstance& ci_;
  State& s_;
  const CaseModel& m_;
  std::size_t count_ = 0;
};

// ---------------------------------------------------------------------------
// CaseInstance

CaseInstance::CaseInstance(std::shared_ptr<const CaseModel> model, std::string id)
    : model_(std::move(model)), id_(std::move(id)) {
  auto exprs = std::make_shared<std::vector<std::optional<Expression>>>();
  for (const auto& s : model_->sentries) {
    if (s.if_part) {
      exprs->push_back(parse_expression(*s.if_part));
    } else {
      exprs->push_back(std::nullopt);
    }
  }
  if_parts_ = std::move(exprs);
  for (const auto& cf : model_->case_file) state_.case_file.declare(cf.path, cf.container);
}

CaseInstance CaseInstance::create(std::shared_ptr<const CaseModel> model,
                                  std::string instance_id,
                                  std::optional<ParentLink> parent) {
  if (!model) throw Error(ErrorCode::invalid_argument, "no model");
  for (const auto& d : validate_model(*model)) {
    if (d.severity == Severity::error) {
      throw Error(ErrorCode::invalid_model, d.to_string());
    }
  }
  CaseInstance ci(std::move(model), std::move(instance_id));
  ci.state_.parent = std::move(parent);
  Cascade::stimulus(ci, [](Cascade& c) { c.create_root(); });
  return ci;
}

const ItemInstance* CaseInstance::find(std::string_view instance_id) const {
  auto idx = resolve(instance_id);
  return idx ? &state_.items[*idx] : nullptr;
}

std::vector<const ItemInstance*> CaseInstance::instances_of(std::string_view def_id) const {
  std::vector<const ItemInstance*> out;
  for (const auto& it : state_.items) {
    if (model_->items[it.def].id == def_id) out.push_back(&it);
  }
  return out;
}

LifecycleKind CaseInstance::lifecycle_kind(const ItemInstance& item) const {
  return item.def == 0 ? LifecycleKind::case_plan
                       : lifecycle_kind_of(model_->items[item.def].kind);
}

std::optional<std::uint32_t> CaseInstance::resolve(std::string_view target) const {
  if (state_.items.empty()) return std::nullopt;
  if (target == "case") return 0;
  for (std::uint32_t i = 0; i < state_.items.size(); ++i) {
    if (state_.items[i].id == target) return i;
  }
  return std::nullopt;
}

bool CaseInstance::permitted(const Actor& actor, Permission p) const {
  if (model_->roles.empty()) return true;
  return std::any_of(actor.roles.begin(), actor.roles.end(), [&](const std::string& r) {
    const RoleDef* role = model_->find_role(r);
    return role && role->permissions.contains(p);
  });
}

void CaseInstance::check_worker_action(const Actor* actor, std::uint32_t target,
                                       EventName action, const std::string& worker,
                                       const json* payload) const {
  const auto& it = state_.items[target];
  const auto& def = model_->items[it.def];
  const bool root = target == 0;
  const LifecycleKind kind = lifecycle_kind(it);
  const std::string what = "'" + std::string(to_string(action)) + "' on " + it.id + " (" +
                           std::string(to_string(it.state)) + ")";
  auto need = [&](Permission p) {
    if (actor && !permitted(*actor, p)) {
      throw Error(ErrorCode::permission_denied,
                  "worker '" + actor->worker + "' lacks permission " +
                      std::string(to_string(p)) + " for " + what);
    }
  };

  if (root) {
    if (action == E::complete) {
      if (it.state != S::active) illegal("illegal transition " + what);
      need(Permission::close_case);
      if (!completion_ready(0)) {
        throw Error(ErrorCode::required_incomplete,
                    "case cannot complete: required or running items remain");
      }
      return;
    }
    const Transition* t = TransitionTable::standard().find(kind, it.state, action);
    if (!t || !t->worker) illegal("illegal transition " + what);
    need(permission_for(action, true, def.kind));
    return;
  }

  if (state_.items[0].state != S::active) {
    illegal("case is " + std::string(to_string(state_.items[0].state)) + "; cannot apply " + what);
  }
  switch (action) {
    case E::claim:
      if (!is_human_task(def.kind) || it.state != S::active) illegal("illegal transition " + what);
      if (def.kind == ItemKind::human_task_blocking && !it.claimed_by.empty()) {
        illegal(it.id + " is already claimed by " + it.claimed_by);
      }
      need(Permission::execute_tasks);
      return;
    case E::complete:
      if (it.state != S::active) illegal("illegal transition " + what);
      switch (def.kind) {
        case ItemKind::stage:
          need(Permission::manual_activate);
          if (!completion_ready(target)) {
            throw Error(ErrorCode::required_incomplete,
                        it.id + " cannot complete: required or running items remain");
          }
          return;
        case ItemKind::human_task_blocking:
          need(Permission::execute_tasks);
          if (it.claimed_by != worker) {
            throw Error(ErrorCode::not_claimed,
                        it.id + " must be claimed by '" + worker + "' before completion");
          }
          return;
        case ItemKind::process_task:
          need(Permission::execute_tasks);
          if (payload && !has_token(*payload)) {
            throw Error(ErrorCode::invalid_argument,
                        "process task completion needs a payload {\"token\": ...}");
          }
          return;
        case ItemKind::case_task:
          if (!is_subcase_actor(worker)) illegal(it.id + " completes with its sub-case");
          return;
        default:
          illegal("illegal transition " + what);
      }
    case E::fault:
      if (def.kind != ItemKind::process_task || it.state != S::active) {
        illegal("illegal transition " + what);
      }
      need(Permission::execute_tasks);
      if (payload && !has_token(*payload)) {
        throw Error(ErrorCode::invalid_argument,
                    "process task fault needs a payload {\"token\": ...}");
      }
      return;
    case E::occur:
      if (def.kind != ItemKind::user_listener || it.state != S::available) {
        illegal("illegal transition " + what);
      }
      need(Permission::execute_tasks);
      return;
    default: {
      const Transition* t = TransitionTable::standard().find(kind, it.state, action);
      if (!t || !t->worker) illegal("illegal transition " + what);
      if (action == E::resume && it.parent &&
          state_.items[*it.parent].state == S::suspended) {
        illegal("cannot resume " + it.id + " while its parent is suspended");
      }
      need(permission_for(action, false, def.kind));
      return;
    }
  }
}

void CaseInstance::check_plan(const Actor* actor, std::uint32_t scope,
                              const std::string& entry) const {
  const auto& sit = state_.items[scope];
  const auto& sdef = model_->items[sit.def];
  const PlanningTable* table = sdef.planning_table ? &*sdef.planning_table : nullptr;
  std::vector<ItemIndex> defs;
  bool found = false;
  if (table) {
    for (const auto& e : table->entries) {
      if (e.kind == PlanningEntry::Kind::item && model_->items[e.index].id == entry) {
        found = true;
        defs.push_back(e.index);
      } else if (e.kind == PlanningEntry::Kind::fragment &&
                 model_->fragments[e.index].id == entry) {
        found = true;
        defs = model_->fragments[e.index].items;
      }
    }
  }
  if (!found) {
    throw Error(ErrorCode::not_in_scope,
                "'" + entry + "' is not in the planning table of " + sit.id);
  }
  if (actor) {
    const bool ok = model_->roles.empty() ||
                    std::any_of(actor->roles.begin(), actor->roles.end(), [&](const std::string& r) {
                      const RoleDef* role = model_->find_role(r);
                      return role && role->permissions.contains(Permission::plan) &&
                             (table->authorized_roles.empty() ||
                              table->authorized_roles.contains(r));
                    });
    if (!ok) {
      throw Error(ErrorCode::permission_denied,
                  "worker '" + actor->worker + "' may not plan '" + entry + "' in " + sit.id);
    }
  }
  if (sit.state != S::active || state_.items[0].state != S::active) {
    throw Error(ErrorCode::scope_not_active,
                sit.id + " is " + std::string(to_string(sit.state)) + "; planning needs it active");
  }
  const std::uint32_t parent = is_human_task(sdef.kind) && scope != 0 ? *sit.parent : scope;
  for (auto d : defs) {
    if (model_->items[d].decorators.repetition) continue;
    for (auto c : state_.items[parent].children) {
      if (state_.items[c].def == d) {
        throw Error(ErrorCode::already_planned,
                    "'" + model_->items[d].id + "' is already planned in " +
                        state_.items[parent].id);
      }
    }
  }
}

bool CaseInstance::completion_ready(std::uint32_t scope) const {
  const auto& it = state_.items[scope];
  for (auto c : it.children) {
    const auto& child = state_.items[c];
    if (child.state == S::active || child.state == S::enabled) return false;
    if (child.started && !is_terminal(lifecycle_kind(child), child.state)) return false;
  }
  for (auto d : model_->items[it.def].children) {
    if (!model_->items[d].decorators.required) continue;
    const bool done = std::any_of(it.children.begin(), it.children.end(), [&](std::uint32_t c) {
      const auto& child = state_.items[c];
      return child.def == d && (child.state == S::completed || child.state == S::occurred);
    });
    if (!done) return false;
  }
  return true;
}

namespace {

std::optional<EventName> parse_action(const std::string& action) {
  auto ev = event_name_from_string(action);
  if (!ev) return std::nullopt;
  if (*ev == E::claim) return ev;
  if (!is_standard_event(*ev) || *ev == E::create || is_case_file_event(*ev)) {
    return std::nullopt;
  }
  return ev;
}

}  // namespace

std::vector<Event> CaseInstance::worker_action(const Actor& actor, const std::string& target,
                                               const std::string& action,
                                               const json& payload) {
  auto idx = resolve(target);
  if (!idx) throw Error(ErrorCode::unknown_target, "no plan item instance '" + target + "'");
  auto ev = parse_action(action);
  if (!ev) throw Error(ErrorCode::invalid_argument, "unknown worker action '" + action + "'");
  if (actor.worker.empty() || actor.worker == kEngineActor || is_subcase_actor(actor.worker)) {
    throw Error(ErrorCode::invalid_argument, "invalid worker id '" + actor.worker + "'");
  }
  check_worker_action(&actor, *idx, *ev, actor.worker, &payload);
  return Cascade::stimulus(*this, [&](Cascade& c) { c.worker(*idx, *ev, actor.worker, payload); });
}

std::vector<Event> CaseInstance::case_file_op(const Actor& actor, const std::string& op,
                                              const std::string& path, const json& payload) {
  auto ev = event_name_from_string(op);
  if (!ev || !is_case_file_event(*ev)) {
    throw Error(ErrorCode::invalid_argument, "unknown case file operation '" + op + "'");
  }
  if (actor.worker.empty() || actor.worker == kEngineActor || is_subcase_actor(actor.worker)) {
    throw Error(ErrorCode::invalid_argument, "invalid worker id '" + actor.worker + "'");
  }
  const S cs = case_state();
  if (cs != S::active && cs != S::suspended) {
    illegal("case file is read-only while the case is " + std::string(to_string(cs)));
  }
  if (!permitted(actor, Permission::modify_case_file)) {
    throw Error(ErrorCode::permission_denied,
                "worker '" + actor.worker + "' lacks permission modify_case_file");
  }
  return Cascade::stimulus(*this, [&](Cascade& c) { c.case_file(*ev, path, actor.worker, payload); });
}

std::vector<Event> CaseInstance::plan(const Actor& actor, const std::string& scope,
                                      const std::string& entry) {
  auto idx = resolve(scope);
  if (!idx) throw Error(ErrorCode::unknown_target, "no scope instance '" + scope + "'");
  check_plan(&actor, *idx, entry);
  return Cascade::stimulus(*this, [&](Cascade& c) { c.plan(*idx, entry, actor.worker); });
}

std::vector<Event> CaseInstance::advance_clock(std::uint64_t ticks) {
  return Cascade::stimulus(*this, [&](Cascade& c) { c.clock(ticks); });
}

std::vector<Event> CaseInstance::dispatch(const Event& head) {
  if (head.source == "clock" && head.name == "tick") {
    if (!head.payload.is_object() || !head.payload.contains("ticks") ||
        !head.payload["ticks"].is_number_unsigned()) {
      throw Error(ErrorCode::invalid_argument, "tick event needs payload {ticks}");
    }
    return advance_clock(head.payload["ticks"].get<std::uint64_t>());
  }
  auto ev = event_name_from_string(head.name);
  if (!ev) throw Error(ErrorCode::invalid_argument, "unknown event name '" + head.name + "'");
  if (*ev == E::create && head.payload.is_object() && head.payload.contains("entry")) {
    const std::string scope = head.payload.value("scope", "");
    const std::string entry = head.payload["entry"].get<std::string>();
    auto idx = resolve(scope);
    if (!idx) throw Error(ErrorCode::unknown_target, "no scope instance '" + scope + "'");
    return Cascade::stimulus(*this, [&](Cascade& c) { c.plan(*idx, entry, head.actor); });
  }
  if (is_case_file_event(*ev) && !resolve(head.source)) {
    std::string path = head.source;
    if ((*ev == E::addChild || *ev == E::removeChild) && head.payload.is_object()) {
      path = head.payload.value("child", "");
    }
    json payload = head.payload.is_null() ? json::object() : head.payload;
    return Cascade::stimulus(*this, [&](Cascade& c) { c.case_file(*ev, path, head.actor, payload); });
  }
  auto idx = resolve(head.source);
  if (!idx) throw Error(ErrorCode::unknown_target, "no plan item instance '" + head.source + "'");
  return Cascade::stimulus(*this, [&](Cascade& c) { c.worker(*idx, *ev, head.actor, head.payload); });
}

std::vector<std::string> CaseInstance::actions_for(const Actor* actor,
                                                   std::uint32_t target) const {
  static constexpr EventName kCandidates[] = {
      E::claim,    E::complete, E::manualStart, E::enable,     E::disable,
      E::reenable, E::suspend,  E::resume,      E::reactivate, E::occur,
      E::fault,    E::terminate, E::close,
  };
  std::vector<std::string> out;
  const std::string worker = actor ? actor->worker : std::string();
  for (auto ev : kCandidates) {
    try {
      check_worker_action(actor, target, ev, worker, nullptr);
      out.emplace_back(to_string(ev));
    } catch (const Error&) {
    }
  }
  return out;
}

std::vector<std::string> CaseInstance::available_actions(const Actor& actor,
                                                         const std::string& target) const {
  auto idx = resolve(target);
  if (!idx) throw Error(ErrorCode::unknown_target, "no plan item instance '" + target + "'");
  return actions_for(&actor, *idx);
}

bool CaseInstance::may_plan(const Actor& actor, const std::string& scope,
                            const std::string& entry) const {
  auto idx = resolve(scope);
  if (!idx) return false;
  try {
    check_plan(&actor, *idx, entry);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::vector<Outbound> CaseInstance::take_outbox() {
  std::vector<Outbound> out;
  out.swap(outbox_);
  return out;
}

// ---------------------------------------------------------------------------
// Views and snapshots

json CaseInstance::query(std::string_view view, const Actor* actor) const {
  if (view == "summary") {
    json j{{"instance", id_},
           {"model", model_->id},
           {"name", model_->name},
           {"caseId", state_.items[0].id},
           {"state", to_string(case_state())},
           {"clock", state_.clock},
           {"seq", state_.seq},
           {"subCases", state_.sub_cases},
           {"availableActions", actions_for(actor, 0)}};
    json work = json::array();
    for (const auto& [id, w] : state_.work_items) {
      work.push_back({{"task", w.task}, {"processKey", w.process_key},
                      {"status", w.status}, {"token", w.token}});
    }
    j["workItems"] = std::move(work);
    j["parent"] = state_.parent ? json{{"instance", state_.parent->instance},
                                       {"task", state_.parent->task}}
                                : json(nullptr);
    return j;
  }
  if (view == "items") {
    json out = json::array();
    for (std::uint32_t i = 1; i < state_.items.size(); ++i) {
      const auto& it = state_.items[i];
      const auto& d = model_->items[it.def];
      json j{{"id", it.id},
             {"definition", d.id},
             {"name", d.name},
             {"kind", to_string(d.kind)},
             {"state", to_string(it.state)},
             {"parent", state_.items[*it.parent].id},
             {"repetitionIndex", it.repetition_index},
             {"discretionary", it.discretionary_origin},
             {"required", d.decorators.required},
             {"manualActivation", d.decorators.manual_activation},
             {"availableActions", actions_for(actor, i)}};
      if (!it.claimed_by.empty()) j["claimedBy"] = it.claimed_by;
      if (it.deadline) j["deadline"] = *it.deadline;
      out.push_back(std::move(j));
    }
    return out;
  }
  if (view == "milestones") {
    json out = json::array();
    for (const auto& it : state_.items) {
      const auto& d = model_->items[it.def];
      if (it.def == 0 || d.kind != ItemKind::milestone) continue;
      out.push_back({{"id", it.id},
                     {"definition", d.id},
                     {"name", d.name},
                     {"state", to_string(it.state)},
                     {"repetitionIndex", it.repetition_index}});
    }
    return out;
  }
  if (view == "case_file") return state_.case_file.to_json();
  if (view == "plannable") {
    json out = json::array();
    for (std::uint32_t i = 0; i < state_.items.size(); ++i) {
      const auto& d = model_->items[state_.items[i].def];
      if (!d.planning_table) continue;
      for (const auto& e : d.planning_table->entries) {
        const bool frag = e.kind == PlanningEntry::Kind::fragment;
        const std::string& entry = frag ? model_->fragments[e.index].id : model_->items[e.index].id;
        const std::string& name = frag ? model_->fragments[e.index].name : model_->items[e.index].name;
        try {
          check_plan(actor, i, entry);
        } catch (const Error&) {
          continue;
        }
        out.push_back({{"scope", state_.items[i].id},
                       {"entry", entry},
                       {"name", name},
                       {"kind", frag ? "plan_fragment" : std::string(to_string(model_->items[e.index].kind))}});
      }
    }
    return out;
  }
  if (view == "history") {
    json out = json::array();
    for (const auto& e : log_) out.push_back(e.to_json());
    return out;
  }
  throw Error(ErrorCode::not_found, "unknown view '" + std::string(view) + "'");
}

json CaseInstance::snapshot() const {
  json items = json::array();
  for (const auto& it : state_.items) {
    json children = json::array();
    for (auto c : it.children) children.push_back(state_.items[c].id);
    items.push_back({
        {"id", it.id},
        {"def", model_->items[it.def].id},
        {"state", to_string(it.state)},
        {"repetitionIndex", it.repetition_index},
        {"preSuspend", it.pre_suspend ? json(to_string(*it.pre_suspend)) : json(nullptr)},
        {"suspendedByParent", it.suspended_by_parent},
        {"discretionary", it.discretionary_origin},
        {"started", it.started},
        {"parent", it.parent ? json(state_.items[*it.parent].id) : json(nullptr)},
        {"children", std::move(children)},
        {"claimedBy", it.claimed_by},
        {"deadline", it.deadline ? json(*it.deadline) : json(nullptr)},
    });
  }
  json sentries = json::array();
  for (const auto& [key, st] : state_.sentries) {
    sentries.push_back({{"sentry", model_->sentries[key.first].id},
                        {"owner", state_.items[key.second].id},
                        {"observed", st.observed},
                        {"armed", st.armed}});
  }
  json work = json::object();
  for (const auto& [id, w] : state_.work_items) {
    work[id] = {{"task", w.task}, {"processKey", w.process_key},
                {"status", w.status}, {"token", w.token}};
  }
  return {
      {"instance", id_},
      {"model", model_->id},
      {"seq", state_.seq},
      {"clock", state_.clock},
      {"items", std::move(items)},
      {"caseFile", state_.case_file.to_json()},
      {"sentries", std::move(sentries)},
      {"counters", state_.counters},
      {"subCases", state_.sub_cases},
      {"workItems", std::move(work)},
      {"parent", state_.parent ? json{{"instance", state_.parent->instance},
                                      {"task", state_.parent->task}}
                               : json(nullptr)},
  };
}

CaseInstance CaseInstance::from_snapshot(std::shared_ptr<const CaseModel> model,
                                         const json& snap) {
  if (!model) throw Error(ErrorCode::invalid_argument, "no model");
  try {
    if (snap.at("model").get<std::string>() != model->id) {
      throw Error(ErrorCode::corrupt_log, "snapshot belongs to another model");
    }
    CaseInstance ci(model, snap.at("instance").get<std::string>());
    State& s = ci.state_;
    s.seq = snap.at("seq").get<std::uint64_t>();
    s.clock = snap.at("clock").get<std::uint64_t>();
    std::map<std::string, std::uint32_t> index;
    const auto& items = snap.at("items");
    for (std::uint32_t i = 0; i < items.size(); ++i) index[items[i].at("id").get<std::string>()] = i;
    auto state_of = [](const json& v) {
      auto st = lifecycle_state_from_string(v.get<std::string>());
      if (!st) throw Error(ErrorCode::corrupt_log, "bad state in snapshot");
      return *st;
    };
    for (const auto& j : items) {
      ItemInstance it;
      it.id = j.at("id").get<std::string>();
      auto def = model->item_index(j.at("def").get<std::string>());
      if (!def) throw Error(ErrorCode::corrupt_log, "snapshot names unknown definition");
      it.def = *def;
      it.state = state_of(j.at("state"));
      it.repetition_index = j.at("repetitionIndex").get<std::uint32_t>();
      if (!j.at("preSuspend").is_null()) it.pre_suspend = state_of(j.at("preSuspend"));
      it.suspended_by_parent = j.at("suspendedByParent").get<bool>();
      it.discretionary_origin = j.at("discretionary").get<bool>();
      it.started = j.at("started").get<bool>();
      if (!j.at("parent").is_null()) it.parent = index.at(j.at("parent").get<std::string>());
      for (const auto& c : j.at("children")) it.children.push_back(index.at(c.get<std::string>()));
      it.claimed_by = j.at("claimedBy").get<std::string>();
      if (!j.at("deadline").is_null()) it.deadline = j.at("deadline").get<std::uint64_t>();
      s.items.push_back(std::move(it));
    }
    s.case_file = CaseFileState::from_json(snap.at("caseFile"));
    for (const auto& j : snap.at("sentries")) {
      auto sen = model->sentry_index(j.at("sentry").get<std::string>());
      if (!sen) throw Error(ErrorCode::corrupt_log, "snapshot names unknown sentry");
      SentryState st;
      st.observed = j.at("observed").get<std::set<std::uint32_t>>();
      st.armed = j.at("armed").get<bool>();
      s.sentries[{*sen, index.at(j.at("owner").get<std::string>())}] = std::move(st);
    }
    s.counters = snap.at("counters").get<std::map<std::string, std::uint32_t>>();
    s.sub_cases = snap.at("subCases").get<std::map<std::string, std::string>>();
    for (const auto& [id, w] : snap.at("workItems").items()) {
      s.work_items[id] = WorkItem{w.at("task").get<std::string>(),
                                  w.at("processKey").get<std::string>(),
                                  w.at("status").get<std::string>(),
                                  w.at("token").get<std::string>()};
    }
    if (const auto& p = snap.at("parent"); !p.is_null()) {
      s.parent = ParentLink{p.at("instance").get<std::string>(), p.at("task").get<std::string>()};
    }
    return ci;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt_log, std::string("malformed snapshot: ") + e.what());
  } catch (const std::out_of_range&) {
    throw Error(ErrorCode::corrupt_log, "snapshot references an unknown item");
  }
}

}  // namespace casewright
