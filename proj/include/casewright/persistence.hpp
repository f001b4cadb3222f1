#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "casewright/instance.hpp"
#include "casewright/model.hpp"

namespace casewright {

/// File-backed store.
///
///   <root>/models/<model-id>.json
///   <root>/instances/<id>/model.json        frozen copy of the model
///   <root>/instances/<id>/meta.json         {instance, model, parent}
///   <root>/instances/<id>/log.jsonl         one event per line, gap-free
///   <root>/instances/<id>/snapshots/<seq>.json
///   <root>/instances/<id>/idempotency.jsonl {key, response}
///
/// Appends for one instance must be serialized by the caller (the runtime
/// holds the instance lock); the store itself only guards its caches.
class Store {
 public:
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  void put_model(const CaseModel& model);
  std::shared_ptr<const CaseModel> get_model(const std::string& id) const;
  bool has_model(const std::string& id) const;
  std::vector<std::string> model_ids() const;

  void create_instance(const std::string& id, const CaseModel& model,
                       const std::optional<ParentLink>& parent);
  bool has_instance(const std::string& id) const;
  std::vector<std::string> instance_ids() const;
  nlohmann::json read_meta(const std::string& id) const;
  std::shared_ptr<const CaseModel> instance_model(const std::string& id) const;

  /// Requires event.seq == last_seq(id) + 1 (SequenceGap otherwise). The
  /// line is fsync'ed before this returns.
  std::uint64_t append_event(const std::string& id, const Event& event);
  /// Same contract for a contiguous batch; one fsync for the batch.
  std::uint64_t append_events(const std::string& id, const std::vector<Event>& events);
  std::uint64_t last_seq(const std::string& id) const;
  /// Throws CorruptLog for malformed lines or gaps.
  std::vector<Event> read_log(const std::string& id) const;

  void write_snapshot(const std::string& id, const CaseInstance& instance);
  /// Highest snapshot with seq <= `max_seq`.
  std::optional<std::pair<std::uint64_t, nlohmann::json>> latest_snapshot(
      const std::string& id, std::uint64_t max_seq) const;
  std::vector<std::uint64_t> snapshot_seqs(const std::string& id) const;

  /// Latest snapshot (if any) plus replay of the remaining log through
  /// dispatch; every regenerated event must match the stored line. An empty
  /// log yields a fresh instance. Throws CorruptLog on any disagreement.
  CaseInstance restore(const std::string& id) const;
  /// Same, ignoring snapshots.
  CaseInstance restore_from_log(const std::string& id) const;

  std::map<std::string, nlohmann::json> read_idempotency(const std::string& id) const;
  void record_idempotency(const std::string& id, const std::string& key,
                          const nlohmann::json& response);

 private:
  std::filesystem::path instance_dir(const std::string& id) const;
  CaseInstance restore_impl(const std::string& id, bool use_snapshots) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::uint64_t> last_;
};

/// Replays `log` onto `instance` starting at log index `from`, checking each
/// regenerated line. Throws CorruptLog on the first disagreement.
void replay_log(CaseInstance& instance, const std::vector<Event>& log, std::size_t from);

}  // namespace casewright
