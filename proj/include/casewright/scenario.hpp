#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "casewright/error.hpp"
#include "casewright/model.hpp"

namespace casewright {

/// One directive of a scenario script.
///
///   as <worker> [role...]
///   action <target> <event> [json-payload]
///   casefile <op> <path> [json-payload]
///   plan <scope> <entry>
///   clock <ticks>
///   expect case <state>
///   expect item <instance-id> <state>
///   expect milestone <definition-id> <state>     (some instance in state)
///   expect count <definition-id> <state> <n>
///   expect casefile <path> exists|absent
///   expect actions <target> [action...]         (exact set, current actor)
///   expect-fail <ErrorCode> <directive...>
///
/// Blank lines and lines starting with '#' are ignored.
struct ScenarioStep {
  std::size_t line = 0;
  std::string directive;
  std::vector<std::string> args;
  nlohmann::json payload;
  std::optional<ErrorCode> expect_error;
  std::string text;
};

struct Scenario {
  std::vector<ScenarioStep> steps;

  /// Accepts the line format or the JSON form ({"steps": [...]}). Throws
  /// ParseError (SyntaxError) with the offending line.
  static Scenario parse(std::string_view text);
  static Scenario load(const std::filesystem::path& path);
};

struct ScenarioOptions {
  std::uint64_t snapshot_every = 0;
  /// Store directory; empty means a private temporary directory that is
  /// removed afterwards.
  std::filesystem::path store;
};

enum class ScenarioStatus { passed, expectation_failed, engine_error };

struct ScenarioResult {
  ScenarioStatus status = ScenarioStatus::passed;
  std::size_t line = 0;
  std::string message;
  std::string instance;
  /// Event log of the scenario's instance, one line per event.
  std::vector<std::string> transcript;
  std::string final_snapshot;

  int exit_code() const {
    return status == ScenarioStatus::passed ? 0
           : status == ScenarioStatus::expectation_failed ? 1
                                                          : 2;
  }
};

/// Runs the script against a fresh instance of `model`. `extra_models` are
/// registered too so case tasks can spawn their sub-cases. After the last
/// step the instance is restored from the store (latest snapshot plus
/// replay, and from the bare log) and both must reproduce the live
/// canonical snapshot byte for byte.
ScenarioResult run_scenario(const CaseModel& model,
                            const std::vector<CaseModel>& extra_models,
                            const Scenario& scenario, const ScenarioOptions& options = {});

/// Loads the model file, plus `<dir>/<caseRef>.json` for every case task
/// target reachable from it.
ScenarioResult run_scenario_files(const std::filesystem::path& model_path,
                                  const std::filesystem::path& scenario_path,
                                  const ScenarioOptions& options = {});

std::vector<CaseModel> load_case_refs(const CaseModel& model,
                                      const std::filesystem::path& dir);

}  // namespace casewright
