#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casewright/instance.hpp"
#include "casewright/persistence.hpp"

namespace casewright {

struct RuntimeOptions {
  /// Write a snapshot once at least this many events were appended since the
  /// previous one; 0 disables snapshots.
  std::uint64_t snapshot_every = 0;
};

/// Owns the live instances of one store. Each instance has its own lock, so
/// requests on one instance are serialized while distinct instances proceed
/// concurrently. Persistent state lives only in the store; the in-memory
/// instance is a cache that can be rebuilt by restore at any time.
class Runtime {
 public:
  Runtime(std::shared_ptr<Store> store, RuntimeOptions options = {});

  Store& store() { return *store_; }

  /// Parses and validates; throws InvalidModel (with the diagnostics in the
  /// message) when the model has errors. Returns the model id.
  std::string register_model(const std::string& text);
  void register_model(const CaseModel& model);
  std::shared_ptr<const CaseModel> model(const std::string& id) const;

  std::string create_instance(const std::string& model_id,
                              std::optional<std::string> instance_id = std::nullopt);
  bool has_instance(const std::string& id) const;
  std::vector<std::string> instance_ids() const;

  std::vector<Event> worker_action(const std::string& id, const Actor& actor,
                                   const std::string& target, const std::string& action,
                                   const nlohmann::json& payload = nullptr);
  std::vector<Event> case_file_op(const std::string& id, const Actor& actor,
                                  const std::string& op, const std::string& path,
                                  const nlohmann::json& payload = nullptr);
  std::vector<Event> plan(const std::string& id, const Actor& actor,
                          const std::string& scope, const std::string& entry);
  std::vector<Event> advance_clock(const std::string& id, std::uint64_t ticks);

  nlohmann::json query(const std::string& id, const std::string& view,
                       const Actor* actor = nullptr);
  /// Consistent copy of the instance taken under its lock.
  CaseInstance instance(const std::string& id);

  /// Events with seq > after; blocks up to `wait` for at least one.
  std::vector<Event> events_after(const std::string& id, std::uint64_t after,
                                  std::chrono::milliseconds wait = std::chrono::milliseconds(0));

  /// Runs `op` at most once per (instance, key); later calls with the same
  /// key return the recorded response. Only successful responses are kept.
  nlohmann::json idempotent(const std::string& id, const std::string& key,
                            const std::function<nlohmann::json()>& op);

  /// Drops cached instances (forcing restore on next access).
  void evict_all();

 private:
  struct Slot {
    std::mutex mutex;
    std::condition_variable changed;
    std::optional<CaseInstance> instance;
    std::uint64_t last_snapshot = 0;
    std::mutex idem_mutex;
    std::optional<std::map<std::string, nlohmann::json>> idem;
  };

  std::shared_ptr<Slot> slot(const std::string& id);
  void load(const std::string& id, Slot& slot);
  std::vector<Event> mutate(const std::string& id,
                            const std::function<std::vector<Event>(CaseInstance&)>& op);
  void commit(const std::string& id, Slot& slot, const std::vector<Event>& events);
  void process(std::vector<Outbound> outbox, const std::string& from);

  std::shared_ptr<Store> store_;
  RuntimeOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
  mutable std::map<std::string, std::shared_ptr<const CaseModel>> models_;
  std::uint64_t next_id_ = 0;
};

}  // namespace casewright
