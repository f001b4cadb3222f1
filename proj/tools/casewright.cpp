// casewright: validate models, run scenario scripts, serve the HTTP API.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "casewright/error.hpp"
#include "casewright/lifecycle.hpp"
#include "casewright/model_json.hpp"
#include "casewright/runtime.hpp"
#include "casewright/scenario.hpp"
#include "casewright/service.hpp"
#include "casewright/validate.hpp"

namespace cw = casewright;

namespace {

std::filesystem::path store_override() {
  const char* env = std::getenv("CASEWRIGHT_STORE");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path();
}

int cmd_validate(const std::string& path) {
  std::shared_ptr<const cw::CaseModel> model;
  try {
    model = cw::load_model_file(path);
  } catch (const cw::Error& e) {
    std::cerr << path << ": " << cw::to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  }
  const auto diagnostics = cw::validate_model(*model);
  for (const auto& d : diagnostics) std::cout << d.to_string() << "\n";
  std::cerr << path << ": " << diagnostics.size() << " diagnostic(s)\n";
  return cw::has_errors(diagnostics) ? 1 : 0;
}

int cmd_run(const std::string& model, const std::string& scenario, std::uint64_t every) {
  cw::ScenarioOptions options;
  options.snapshot_every = every;
  options.store = store_override();
  cw::ScenarioResult result;
  try {
    result = cw::run_scenario_files(model, scenario, options);
  } catch (const cw::Error& e) {
    std::cerr << cw::to_string(e.code()) << ": " << e.what() << "\n";
    return 2;
  }
  for (const auto& line : result.transcript) std::cout << line << "\n";
  std::cout.flush();
  if (result.status != cw::ScenarioStatus::passed) {
    std::cerr << (result.status == cw::ScenarioStatus::expectation_failed ? "FAIL " : "ERROR ")
              << result.message << "\n";
  }
  return result.exit_code();
}

int cmd_serve(const std::string& config_path) {
  cw::ServiceConfig config;
  try {
    config = cw::ServiceConfig::load(config_path);
  } catch (const cw::Error& e) {
    std::cerr << config_path << ": " << e.what() << "\n";
    return 2;
  }
  if (auto s = store_override(); !s.empty()) config.store = s;

  // Block termination signals here so every thread inherits the mask and a
  // dedicated waiter can stop the server cleanly.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::shared_ptr<cw::Runtime> runtime;
  try {
    auto store = std::make_shared<cw::Store>(config.store);
    runtime = std::make_shared<cw::Runtime>(store, cw::RuntimeOptions{config.snapshot_every});
  } catch (const std::exception& e) {
    std::cerr << "cannot open store " << config.store << ": " << e.what() << "\n";
    return 2;
  }
  cw::Service service(config, runtime);
  if (!service.bind()) {
    std::cerr << "cannot bind " << config.host << ":" << config.port << "\n";
    return 2;
  }
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  waiter.detach();
  std::cout << "casewright listening on http://" << config.host << ":" << service.port()
            << std::endl;
  service.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"casewright: CMMN case management engine"};
  app.require_subcommand(1);

  std::string model, scenario, config;
  std::uint64_t every = 0;

  auto* validate = app.add_subcommand("validate", "Check a model file");
  validate->add_option("model", model, "Model JSON file")->required();

  auto* run = app.add_subcommand("run", "Execute a scenario script; prints the event log");
  run->add_option("model", model, "Model JSON file")->required();
  run->add_option("scenario", scenario, "Scenario script")->required();
  run->add_option("--snapshot-every", every, "Snapshot after this many events (0 = never)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("config", config, "Service config JSON")->required();

  auto* lifecycle = app.add_subcommand("export-lifecycle",
                                       "Print the encoded transition tables as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*validate) return cmd_validate(model);
  if (*run) return cmd_run(model, scenario, every);
  if (*serve) return cmd_serve(config);
  if (*lifecycle) {
    std::cout << cw::TransitionTable::standard().to_json().dump(2) << "\n";
    return 0;
  }
  return 2;
}
