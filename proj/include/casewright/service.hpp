#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "casewright/error.hpp"
#include "casewright/instance.hpp"
#include "casewright/runtime.hpp"

namespace casewright {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path store;
  std::uint64_t snapshot_every = 0;
  /// Bearer token -> session.
  std::map<std::string, Actor> tokens;

  /// {"host", "port", "store", "snapshotEvery",
  ///  "tokens": {"<token>": {"worker": "...", "roles": [...]}}}
  /// Throws InvalidArgument for anything malformed.
  static ServiceConfig from_json(const nlohmann::json& j);
  static ServiceConfig load(const std::filesystem::path& path);
};

/// HTTP status used for an engine error code.
int http_status(ErrorCode code);

class Service {
 public:
  Service(ServiceConfig config, std::shared_ptr<Runtime> runtime);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket; false if the address is unavailable.
  bool bind();
  int port() const;
  /// Serves until stop(); call after a successful bind().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace casewright
