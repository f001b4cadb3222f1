#include "casewright/service.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "casewright/lifecycle.hpp"

namespace casewright {

using nlohmann::json;

ServiceConfig ServiceConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "config must be a JSON object");
  ServiceConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "host") {
        c.host = value.get<std::string>();
      } else if (key == "port") {
        const int port = value.get<int>();
        if (port < 0 || port > 65535) throw Error(ErrorCode::invalid_argument, "port out of range");
        c.port = port;
      } else if (key == "store") {
        c.store = value.get<std::string>();
      } else if (key == "snapshotEvery") {
        c.snapshot_every = value.get<std::uint64_t>();
      } else if (key == "tokens") {
        for (const auto& [token, session] : value.items()) {
          Actor a;
          a.worker = session.at("worker").get<std::string>();
          for (const auto& r : session.value("roles", json::array())) a.roles.insert(r.get<std::string>());
          if (a.worker.empty() || a.worker == kEngineActor || a.worker.rfind("case:", 0) == 0) {
            throw Error(ErrorCode::invalid_argument, "invalid worker id for token");
          }
          c.tokens[token] = std::move(a);
        }
      } else {
        throw Error(ErrorCode::invalid_argument, "unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("malformed config: ") + e.what());
  }
  if (c.store.empty()) throw Error(ErrorCode::invalid_argument, "config needs a store path");
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::invalid_argument, std::string("config is not JSON: ") + e.what());
  }
  return from_json(j);
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::permission_denied:
      return 403;
    case ErrorCode::not_found:
    case ErrorCode::unknown_target:
    case ErrorCode::no_such_path:
      return 404;
    case ErrorCode::illegal_transition:
    case ErrorCode::sequence_gap:
    case ErrorCode::not_claimed:
    case ErrorCode::required_incomplete:
    case ErrorCode::scope_not_active:
    case ErrorCode::already_planned:
    case ErrorCode::cascade_limit_exceeded:
    case ErrorCode::duplicate_id:
      return 409;
    case ErrorCode::corrupt_log:
    case ErrorCode::io_error:
      return 500;
    default:
      return 400;
  }
}

struct Service::Impl {
  ServiceConfig config;
  std::shared_ptr<Runtime> runtime;
  httplib::Server server;
  int port = 0;
  std::atomic<bool> stopping{false};

  using Handler = std::function<void(const httplib::Request&, httplib::Response&, const Actor&)>;

  static void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, std::string_view code,
                         const std::string& message) {
    send(res, status, json{{"error", code}, {"message", message}});
  }

  const Actor* authenticate(const httplib::Request& req) const {
    const std::string auth = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (auth.rfind(prefix, 0) != 0) return nullptr;
    auto it = config.tokens.find(auth.substr(prefix.size()));
    return it == config.tokens.end() ? nullptr : &it->second;
  }

  httplib::Server::Handler guard(Handler fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        const Actor* actor = authenticate(req);
        if (!actor) {
          send_error(res, 401, "Unauthorized", "missing or unknown bearer token");
          return;
        }
        fn(req, res, *actor);
      } catch (const Error& e) {
        send_error(res, http_status(e.code()), to_string(e.code()), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, "InvalidArgument", std::string("malformed request: ") + e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    };
  }

  static json body_of(const httplib::Request& req) {
    json j;
    try {
      j = json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::invalid_argument, std::string("request body is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::invalid_argument, "request body must be an object");
    return j;
  }

  static std::string field(const json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end() || !it->is_string()) {
      throw Error(ErrorCode::invalid_argument, std::string("missing string field '") + key + "'");
    }
    return it->get<std::string>();
  }

  static json batch(const std::vector<Event>& events, std::uint64_t seq) {
    json list = json::array();
    for (const auto& e : events) list.push_back(e.to_json());
    return json{{"events", std::move(list)}, {"seq", seq}};
  }

  // Mutations go through the idempotency table when the client sends a key.
  void mutate(const httplib::Request& req, httplib::Response& res, const std::string& id,
              const std::function<std::vector<Event>()>& op) {
    auto run = [&] {
      auto events = op();
      return batch(events, runtime->instance(id).last_seq());
    };
    const std::string key = req.get_header_value("Idempotency-Key");
    send(res, 200, key.empty() ? run() : runtime->idempotent(id, key, run));
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers",
                                 "Authorization, Content-Type, Idempotency-Key, Accept"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      send(res, 200, json{{"status", "ok"}});
    });

    server.Get("/lifecycle", guard([](const httplib::Request&, httplib::Response& res, const Actor&) {
      send(res, 200, TransitionTable::standard().to_json());
    }));

    server.Get("/models", guard([this](const httplib::Request&, httplib::Response& res, const Actor&) {
      send(res, 200, runtime->store().model_ids());
    }));

    server.Post("/models", guard([this](const httplib::Request& req, httplib::Response& res, const Actor&) {
      const std::string id = runtime->register_model(req.body);
      send(res, 201, json{{"id", id}});
    }));

    server.Get("/instances", guard([this](const httplib::Request&, httplib::Response& res, const Actor&) {
      send(res, 200, runtime->instance_ids());
    }));

    server.Post("/instances", guard([this](const httplib::Request& req, httplib::Response& res, const Actor& actor) {
      const json body = body_of(req);
      std::optional<std::string> wanted;
      if (body.contains("id")) wanted = field(body, "id");
      const std::string id = runtime->create_instance(field(body, "model"), wanted);
      send(res, 201, json{{"instance", id}, {"summary", runtime->query(id, "summary", &actor)}});
    }));

    server.Get(R"(/instances/([^/]+)/events)",
               guard([this](const httplib::Request& req, httplib::Response& res, const Actor&) {
      const std::string id = req.matches[1];
      std::uint64_t after = 0;
      long wait = 0;
      try {
        if (req.has_param("after")) after = std::stoull(req.get_param_value("after"));
        if (req.has_param("wait")) wait = std::stol(req.get_param_value("wait"));
      } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, "after and wait must be integers");
      }
      wait = std::clamp(wait, 0L, 30000L);
      if (!runtime->has_instance(id)) throw Error(ErrorCode::not_found, "no instance '" + id + "'");

      if (req.get_header_value("Accept").find("text/event-stream") != std::string::npos) {
        auto cursor = std::make_shared<std::uint64_t>(after);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [this, id, cursor](size_t, httplib::DataSink& sink) {
              if (stopping) return false;
              for (const auto& e : runtime->events_after(id, *cursor, std::chrono::milliseconds(500))) {
                const std::string frame =
                    "id: " + std::to_string(e.seq) + "\ndata: " + e.to_line() + "\n\n";
                if (!sink.write(frame.data(), frame.size())) return false;
                *cursor = e.seq;
              }
              return sink.is_writable() && !stopping;
            });
        return;
      }
      std::string out;
      for (const auto& e : runtime->events_after(id, after, std::chrono::milliseconds(wait))) {
        out += e.to_line();
        out += '\n';
      }
      res.status = 200;
      res.set_content(out, "application/x-ndjson");
    }));

    server.Get(R"(/instances/([^/]+)/([a-z_]+))",
               guard([this](const httplib::Request& req, httplib::Response& res, const Actor& actor) {
      std::string view = req.matches[2];
      if (view == "casefile") view = "case_file";
      send(res, 200, runtime->query(req.matches[1], view, &actor));
    }));

    server.Post(R"(/instances/([^/]+)/actions)",
                guard([this](const httplib::Request& req, httplib::Response& res, const Actor& actor) {
      const std::string id = req.matches[1];
      const json body = body_of(req);
      const std::string target = field(body, "target");
      const std::string action = field(body, "action");
      const json payload = body.value("payload", json());
      mutate(req, res, id, [&] { return runtime->worker_action(id, actor, target, action, payload); });
    }));

    server.Post(R"(/instances/([^/]+)/casefile)",
                guard([this](const httplib::Request& req, httplib::Response& res, const Actor& actor) {
      const std::string id = req.matches[1];
      const json body = body_of(req);
      const std::string op = field(body, "op");
      const std::string path = field(body, "path");
      const json payload = body.value("payload", json());
      mutate(req, res, id, [&] { return runtime->case_file_op(id, actor, op, path, payload); });
    }));

    server.Post(R"(/instances/([^/]+)/plan)",
                guard([this](const httplib::Request& req, httplib::Response& res, const Actor& actor) {
      const std::string id = req.matches[1];
      const json body = body_of(req);
      const std::string scope = field(body, "scope");
      const std::string entry = field(body, "entry");
      mutate(req, res, id, [&] { return runtime->plan(id, actor, scope, entry); });
    }));

    server.Post(R"(/instances/([^/]+)/clock)",
                guard([this](const httplib::Request& req, httplib::Response& res, const Actor&) {
      const std::string id = req.matches[1];
      const json body = body_of(req);
      if (!body.contains("ticks") || !body["ticks"].is_number_unsigned()) {
        throw Error(ErrorCode::invalid_argument, "ticks must be a positive integer");
      }
      const auto ticks = body["ticks"].get<std::uint64_t>();
      mutate(req, res, id, [&] { return runtime->advance_clock(id, ticks); });
    }));
  }
};

Service::Service(ServiceConfig config, std::shared_ptr<Runtime> runtime)
    : impl_(std::make_unique<Impl>()) {
  impl_->config = std::move(config);
  impl_->runtime = std::move(runtime);
  impl_->routes();
}

Service::~Service() { stop(); }

bool Service::bind() {
  if (impl_->config.port == 0) {
    const int p = impl_->server.bind_to_any_port(impl_->config.host);
    if (p <= 0) return false;
    impl_->port = p;
    return true;
  }
  if (!impl_->server.bind_to_port(impl_->config.host, impl_->config.port)) return false;
  impl_->port = impl_->config.port;
  return true;
}

int Service::port() const { return impl_->port; }

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  impl_->stopping = true;
  impl_->server.stop();
}

}  // namespace casewright
