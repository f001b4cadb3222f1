#include "casewright/persistence.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "casewright/error.hpp"
#include "casewright/model_json.hpp"

namespace casewright {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_id(const std::string& id) {
  const bool ok = !id.empty() && id != "." && id != ".." &&
                  std::all_of(id.begin(), id.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
                           c == '-' || c == '.';
                  });
  if (!ok) throw Error(ErrorCode::invalid_argument, "invalid id '" + id + "'");
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void sync_write(const fs::path& p, const std::string& data, bool append) {
  const int flags = O_WRONLY | O_CREAT | O_CLOEXEC | (append ? O_APPEND : O_TRUNC);
  const int fd = ::open(p.c_str(), flags, 0644);
  if (fd < 0) {
    throw Error(ErrorCode::io_error, "cannot open " + p.string() + ": " + std::strerror(errno));
  }
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw Error(ErrorCode::io_error, "write to " + p.string() + " failed: " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error(ErrorCode::io_error, "fsync of " + p.string() + " failed: " + std::strerror(err));
  }
  ::close(fd);
}

// Write-then-rename so readers never see a partial document.
void atomic_write(const fs::path& p, const std::string& data) {
  fs::path tmp = p;
  tmp += ".tmp";
  sync_write(tmp, data, false);
  fs::rename(tmp, p);
}

}  // namespace

Store::Store(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "models");
  fs::create_directories(root_ / "instances");
}

fs::path Store::instance_dir(const std::string& id) const {
  check_id(id);
  return root_ / "instances" / id;
}

void Store::put_model(const CaseModel& model) {
  check_id(model.id);
  atomic_write(root_ / "models" / (model.id + ".json"), serialize_model(model).dump(2) + "\n");
}

std::shared_ptr<const CaseModel> Store::get_model(const std::string& id) const {
  check_id(id);
  const fs::path p = root_ / "models" / (id + ".json");
  if (!fs::exists(p)) throw Error(ErrorCode::not_found, "no model '" + id + "'");
  return load_model_file(p.string());
}

bool Store::has_model(const std::string& id) const {
  check_id(id);
  return fs::exists(root_ / "models" / (id + ".json"));
}

std::vector<std::string> Store::model_ids() const {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(root_ / "models")) {
    if (e.path().extension() == ".json") out.push_back(e.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void Store::create_instance(const std::string& id, const CaseModel& model,
                            const std::optional<ParentLink>& parent) {
  const fs::path dir = instance_dir(id);
  if (fs::exists(dir / "meta.json")) {
    throw Error(ErrorCode::duplicate_id, "instance '" + id + "' already exists");
  }
  fs::create_directories(dir / "snapshots");
  atomic_write(dir / "model.json", serialize_model(model).dump(2) + "\n");
  json meta{{"instance", id}, {"model", model.id}};
  meta["parent"] = parent ? json{{"instance", parent->instance}, {"task", parent->task}}
                          : json(nullptr);
  atomic_write(dir / "meta.json", meta.dump(2) + "\n");
  sync_write(dir / "log.jsonl", "", true);
  std::lock_guard lock(mutex_);
  last_[id] = 0;
}

bool Store::has_instance(const std::string& id) const {
  return fs::exists(instance_dir(id) / "meta.json");
}

std::vector<std::string> Store::instance_ids() const {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(root_ / "instances")) {
    if (fs::exists(e.path() / "meta.json")) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

json Store::read_meta(const std::string& id) const {
  const fs::path p = instance_dir(id) / "meta.json";
  if (!fs::exists(p)) throw Error(ErrorCode::not_found, "no instance '" + id + "'");
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::corrupt_log, "malformed meta.json for " + id);
  }
}

std::shared_ptr<const CaseModel> Store::instance_model(const std::string& id) const {
  const fs::path p = instance_dir(id) / "model.json";
  if (!fs::exists(p)) throw Error(ErrorCode::not_found, "no instance '" + id + "'");
  return load_model_file(p.string());
}

std::uint64_t Store::last_seq(const std::string& id) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = last_.find(id); it != last_.end()) return it->second;
  }
  const auto log = read_log(id);
  std::lock_guard lock(mutex_);
  return last_[id] = log.empty() ? 0 : log.back().seq;
}

std::uint64_t Store::append_event(const std::string& id, const Event& event) {
  return append_events(id, {event});
}

std::uint64_t Store::append_events(const std::string& id, const std::vector<Event>& events) {
  std::uint64_t last = last_seq(id);
  if (events.empty()) return last;
  std::string data;
  for (const auto& e : events) {
    if (e.seq != last + 1) {
      throw Error(ErrorCode::sequence_gap, "instance " + id + ": expected seq " +
                                               std::to_string(last + 1) + ", got " +
                                               std::to_string(e.seq));
    }
    last = e.seq;
    data += e.to_line();
    data += '\n';
  }
  if (!has_instance(id)) throw Error(ErrorCode::not_found, "no instance '" + id + "'");
  sync_write(instance_dir(id) / "log.jsonl", data, true);
  std::lock_guard lock(mutex_);
  last_[id] = last;
  return last;
}

std::vector<Event> Store::read_log(const std::string& id) const {
  const fs::path p = instance_dir(id) / "log.jsonl";
  if (!fs::exists(p)) throw Error(ErrorCode::not_found, "no instance '" + id + "'");
  std::istringstream in(read_file(p));
  std::vector<Event> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(Event::from_json(json::parse(line)));
    } catch (const json::parse_error&) {
      throw Error(ErrorCode::corrupt_log, id + ": log line " + std::to_string(n) + " is not JSON");
    } catch (const Error& e) {
      throw Error(ErrorCode::corrupt_log, id + ": log line " + std::to_string(n) + ": " + e.what());
    }
    if (out.back().seq != out.size()) {
      throw Error(ErrorCode::corrupt_log, id + ": log line " + std::to_string(n) +
                                              " has seq " + std::to_string(out.back().seq));
    }
  }
  return out;
}

void Store::write_snapshot(const std::string& id, const CaseInstance& instance) {
  const fs::path dir = instance_dir(id) / "snapshots";
  fs::create_directories(dir);
  atomic_write(dir / (std::to_string(instance.last_seq()) + ".json"),
               instance.canonical_snapshot() + "\n");
}

std::vector<std::uint64_t> Store::snapshot_seqs(const std::string& id) const {
  std::vector<std::uint64_t> out;
  const fs::path dir = instance_dir(id) / "snapshots";
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    try {
      out.push_back(std::stoull(e.path().stem().string()));
    } catch (const std::exception&) {
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<std::pair<std::uint64_t, json>> Store::latest_snapshot(const std::string& id,
                                                                     std::uint64_t max_seq) const {
  auto seqs = snapshot_seqs(id);
  for (auto it = seqs.rbegin(); it != seqs.rend(); ++it) {
    if (*it > max_seq) continue;
    const fs::path p = instance_dir(id) / "snapshots" / (std::to_string(*it) + ".json");
    try {
      return std::make_pair(*it, json::parse(read_file(p)));
    } catch (const json::parse_error&) {
      throw Error(ErrorCode::corrupt_log, id + ": snapshot " + std::to_string(*it) + " is not JSON");
    }
  }
  return std::nullopt;
}

void replay_log(CaseInstance& instance, const std::vector<Event>& log, std::size_t from) {
  std::size_t pos = from;
  while (pos < log.size()) {
    const Event& head = log[pos];
    std::vector<Event> regenerated;
    try {
      regenerated = instance.dispatch(head);
    } catch (const Error& e) {
      throw Error(ErrorCode::corrupt_log, "replay of seq " + std::to_string(head.seq) +
                                              " failed: " + std::string(to_string(e.code())) +
                                              ": " + e.what());
    }
    instance.take_outbox();
    for (std::size_t i = 0; i < regenerated.size(); ++i) {
      if (pos + i >= log.size() || regenerated[i].to_line() != log[pos + i].to_line()) {
        throw Error(ErrorCode::corrupt_log,
                    "replay diverges at seq " + std::to_string(head.seq + i) + ": regenerated " +
                        regenerated[i].to_line());
      }
    }
    pos += regenerated.size();
  }
}

CaseInstance Store::restore_impl(const std::string& id, bool use_snapshots) const {
  const json meta = read_meta(id);
  auto model = instance_model(id);
  std::optional<ParentLink> parent;
  if (meta.contains("parent") && meta["parent"].is_object()) {
    parent = ParentLink{meta["parent"].value("instance", ""), meta["parent"].value("task", "")};
  }
  std::vector<Event> log = read_log(id);
  const std::uint64_t last = log.empty() ? 0 : log.back().seq;

  std::optional<std::pair<std::uint64_t, json>> snap;
  if (use_snapshots && last > 0) snap = latest_snapshot(id, last);

  if (snap) {
    CaseInstance ci = CaseInstance::from_snapshot(model, snap->second);
    if (ci.last_seq() != snap->first) {
      throw Error(ErrorCode::corrupt_log, id + ": snapshot file name disagrees with its seq");
    }
    replay_log(ci, log, static_cast<std::size_t>(snap->first));
    ci.take_outbox();
    ci.set_log(std::move(log));
    return ci;
  }

  CaseInstance ci = CaseInstance::create(model, id, parent);
  ci.take_outbox();
  if (log.empty()) return ci;
  const auto& created = ci.log();
  for (std::size_t i = 0; i < created.size(); ++i) {
    if (i >= log.size() || created[i].to_line() != log[i].to_line()) {
      throw Error(ErrorCode::corrupt_log, id + ": creation events do not match the log");
    }
  }
  replay_log(ci, log, created.size());
  ci.take_outbox();
  ci.set_log(std::move(log));
  return ci;
}

CaseInstance Store::restore(const std::string& id) const { return restore_impl(id, true); }

CaseInstance Store::restore_from_log(const std::string& id) const {
  return restore_impl(id, false);
}

std::map<std::string, json> Store::read_idempotency(const std::string& id) const {
  std::map<std::string, json> out;
  const fs::path p = instance_dir(id) / "idempotency.jsonl";
  if (!fs::exists(p)) return out;
  std::istringstream in(read_file(p));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      out[j.at("key").get<std::string>()] = j.at("response");
    } catch (const json::exception&) {
      // A torn final line from a crash: the request was not acknowledged.
    }
  }
  return out;
}

void Store::record_idempotency(const std::string& id, const std::string& key,
                               const json& response) {
  json line{{"key", key}, {"response", response}};
  sync_write(instance_dir(id) / "idempotency.jsonl", line.dump() + "\n", true);
}

}  // namespace casewright
