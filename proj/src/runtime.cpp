#include "casewright/runtime.hpp"

#include <set>

#include "casewright/error.hpp"
#include "casewright/model_json.hpp"
#include "casewright/validate.hpp"

namespace casewright {

using nlohmann::json;

Runtime::Runtime(std::shared_ptr<Store> store, RuntimeOptions options)
    : store_(std::move(store)), options_(options) {}

std::string Runtime::register_model(const std::string& text) {
  CaseModel model = parse_model(text);
  register_model(model);
  return model.id;
}

void Runtime::register_model(const CaseModel& model) {
  const auto diagnostics = validate_model(model);
  if (has_errors(diagnostics)) {
    std::string msg = "model '" + model.id + "' is invalid:";
    for (const auto& d : diagnostics) msg += "\n  " + d.to_string();
    throw Error(ErrorCode::invalid_model, msg);
  }
  store_->put_model(model);
  std::lock_guard lock(mutex_);
  models_[model.id] = std::make_shared<const CaseModel>(model);
}

std::shared_ptr<const CaseModel> Runtime::model(const std::string& id) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = models_.find(id); it != models_.end()) return it->second;
  }
  auto m = store_->get_model(id);
  std::lock_guard lock(mutex_);
  return models_.emplace(id, std::move(m)).first->second;
}

std::string Runtime::create_instance(const std::string& model_id,
                                     std::optional<std::string> instance_id) {
  auto m = model(model_id);
  // Every case task target must resolve before anything is persisted.
  const auto refs = m->case_refs();
  std::vector<std::string> pending(refs.begin(), refs.end());
  std::set<std::string> seen{m->id};
  while (!pending.empty()) {
    const std::string ref = pending.back();
    pending.pop_back();
    if (!seen.insert(ref).second) continue;
    std::shared_ptr<const CaseModel> target;
    try {
      target = model(ref);
    } catch (const Error&) {
      throw Error(ErrorCode::not_found,
                  "case task target model '" + ref + "' is not registered");
    }
    for (const auto& r : target->case_refs()) pending.push_back(r);
  }

  std::string id;
  if (instance_id) {
    id = *instance_id;
  } else {
    std::lock_guard lock(mutex_);
    do {
      id = model_id + "-" + std::to_string(++next_id_);
    } while (store_->has_instance(id));
  }
  CaseInstance ci = CaseInstance::create(m, id);
  store_->create_instance(id, *m, std::nullopt);
  auto s = slot(id);
  std::vector<Outbound> out;
  {
    std::lock_guard lock(s->mutex);
    s->instance = std::move(ci);
    try {
      commit(id, *s, s->instance->log());
    } catch (...) {
      s->instance.reset();
      throw;
    }
    out = s->instance->take_outbox();
  }
  s->changed.notify_all();
  process(std::move(out), id);
  return id;
}

bool Runtime::has_instance(const std::string& id) const { return store_->has_instance(id); }

std::vector<std::string> Runtime::instance_ids() const { return store_->instance_ids(); }

std::shared_ptr<Runtime::Slot> Runtime::slot(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto& s = slots_[id];
  if (!s) s = std::make_shared<Slot>();
  return s;
}

void Runtime::load(const std::string& id, Slot& s) {
  if (s.instance) return;
  if (!store_->has_instance(id)) throw Error(ErrorCode::not_found, "no instance '" + id + "'");
  s.instance = store_->restore(id);
  s.instance->take_outbox();
  auto seqs = store_->snapshot_seqs(id);
  s.last_snapshot = seqs.empty() ? 0 : seqs.back();
}

void Runtime::commit(const std::string& id, Slot& s, const std::vector<Event>& events) {
  if (events.empty()) return;
  store_->append_events(id, events);
  const std::uint64_t seq = s.instance->last_seq();
  if (options_.snapshot_every > 0 && seq - s.last_snapshot >= options_.snapshot_every) {
    store_->write_snapshot(id, *s.instance);
    s.last_snapshot = seq;
  }
}

std::vector<Event> Runtime::mutate(const std::string& id,
                                   const std::function<std::vector<Event>(CaseInstance&)>& op) {
  auto s = slot(id);
  std::vector<Event> events;
  std::vector<Outbound> out;
  {
    std::lock_guard lock(s->mutex);
    load(id, *s);
    events = op(*s->instance);
    try {
      commit(id, *s, events);
    } catch (...) {
      // Memory is ahead of disk now; rebuild from the store next time.
      s->instance.reset();
      throw;
    }
    out = s->instance->take_outbox();
  }
  s->changed.notify_all();
  process(std::move(out), id);
  return events;
}

void Runtime::process(std::vector<Outbound> outbox, const std::string& from) {
  for (const auto& o : outbox) {
    switch (o.kind) {
      case Outbound::Kind::spawn_case: {
        if (store_->has_instance(o.instance)) break;
        auto m = model(o.model);
        CaseInstance ci = CaseInstance::create(m, o.instance, ParentLink{from, o.task});
        store_->create_instance(o.instance, *m, ParentLink{from, o.task});
        auto s = slot(o.instance);
        std::vector<Outbound> next;
        {
          std::lock_guard lock(s->mutex);
          s->instance = std::move(ci);
          commit(o.instance, *s, s->instance->log());
          next = s->instance->take_outbox();
        }
        s->changed.notify_all();
        process(std::move(next), o.instance);
        break;
      }
      case Outbound::Kind::notify_parent: {
        Event head;
        head.source = o.task;
        head.name = "complete";
        head.actor = "case:" + from;
        try {
          mutate(o.instance, [&](CaseInstance& ci) { return ci.dispatch(head); });
        } catch (const Error&) {
          // The parent task is no longer active (suspended or gone); the
          // child's completion stays visible in the child's own state.
        }
        break;
      }
      case Outbound::Kind::terminate_case: {
        Event head;
        head.source = "case";
        head.name = "terminate";
        head.actor = "case:" + from;
        try {
          mutate(o.instance, [&](CaseInstance& ci) { return ci.dispatch(head); });
        } catch (const Error&) {
          // Already finished.
        }
        break;
      }
    }
  }
}

std::vector<Event> Runtime::worker_action(const std::string& id, const Actor& actor,
                                          const std::string& target, const std::string& action,
                                          const json& payload) {
  return mutate(id, [&](CaseInstance& ci) {
    return ci.worker_action(actor, target, action, payload);
  });
}

std::vector<Event> Runtime::case_file_op(const std::string& id, const Actor& actor,
                                         const std::string& op, const std::string& path,
                                         const json& payload) {
  return mutate(id, [&](CaseInstance& ci) { return ci.case_file_op(actor, op, path, payload); });
}

std::vector<Event> Runtime::plan(const std::string& id, const Actor& actor,
                                 const std::string& scope, const std::string& entry) {
  return mutate(id, [&](CaseInstance& ci) { return ci.plan(actor, scope, entry); });
}

std::vector<Event> Runtime::advance_clock(const std::string& id, std::uint64_t ticks) {
  return mutate(id, [&](CaseInstance& ci) { return ci.advance_clock(ticks); });
}

json Runtime::query(const std::string& id, const std::string& view, const Actor* actor) {
  auto s = slot(id);
  std::lock_guard lock(s->mutex);
  load(id, *s);
  return s->instance->query(view, actor);
}

CaseInstance Runtime::instance(const std::string& id) {
  auto s = slot(id);
  std::lock_guard lock(s->mutex);
  load(id, *s);
  return *s->instance;
}

std::vector<Event> Runtime::events_after(const std::string& id, std::uint64_t after,
                                         std::chrono::milliseconds wait) {
  auto s = slot(id);
  std::unique_lock lock(s->mutex);
  load(id, *s);
  if (wait.count() > 0) {
    s->changed.wait_for(lock, wait, [&] {
      return !s->instance || s->instance->last_seq() > after;
    });
    load(id, *s);
  }
  std::vector<Event> out;
  for (const auto& e : s->instance->log()) {
    if (e.seq > after) out.push_back(e);
  }
  return out;
}

json Runtime::idempotent(const std::string& id, const std::string& key,
                         const std::function<json()>& op) {
  if (!store_->has_instance(id)) throw Error(ErrorCode::not_found, "no instance '" + id + "'");
  auto s = slot(id);
  std::lock_guard lock(s->idem_mutex);
  if (!s->idem) s->idem = store_->read_idempotency(id);
  if (auto it = s->idem->find(key); it != s->idem->end()) return it->second;
  json response = op();
  store_->record_idempotency(id, key, response);
  (*s->idem)[key] = response;
  return response;
}

void Runtime::evict_all() {
  std::lock_guard lock(mutex_);
  for (auto& [id, s] : slots_) {
    std::lock_guard inner(s->mutex);
    s->instance.reset();
    s->idem.reset();
  }
}

}  // namespace casewright
