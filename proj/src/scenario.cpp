#include "casewright/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "casewright/model_json.hpp"
#include "casewright/runtime.hpp"

namespace casewright {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Splits off up to `n` leading words; the untouched remainder is returned
// separately so JSON payloads keep their spaces.
std::vector<std::string> words(std::string_view s, std::size_t n, std::string_view& rest) {
  std::vector<std::string> out;
  s = trim(s);
  while (!s.empty() && out.size() < n) {
    if (s.front() == '{' || s.front() == '[') break;
    auto end = s.find_first_of(" \t");
    out.emplace_back(s.substr(0, end));
    s = end == std::string_view::npos ? std::string_view() : trim(s.substr(end));
  }
  rest = s;
  return out;
}

[[noreturn]] void bad_line(std::size_t line, const std::string& why) {
  throw ParseError(ErrorCode::syntax_error, "scenario line " + std::to_string(line) + ": " + why,
                   line);
}

std::size_t arity(const std::string& directive) {
  if (directive == "action" || directive == "casefile" || directive == "plan") return 2;
  if (directive == "clock") return 1;
  return 0;
}

ScenarioStep parse_directive(std::string_view text, std::size_t line) {
  ScenarioStep step;
  step.line = line;
  step.text = std::string(text);
  std::string_view rest;
  auto head = words(text, 1, rest);
  if (head.empty()) bad_line(line, "empty directive");
  step.directive = head[0];
  if (step.directive == "expect-fail") {
    auto code = words(rest, 1, rest);
    if (code.empty()) bad_line(line, "expect-fail needs an error code");
    auto ec = error_code_from_string(code[0]);
    if (!ec) bad_line(line, "unknown error code '" + code[0] + "'");
    ScenarioStep inner = parse_directive(rest, line);
    if (inner.directive == "expect" || inner.directive == "as" || inner.expect_error) {
      bad_line(line, "expect-fail wraps an action, casefile, plan or clock directive");
    }
    inner.expect_error = ec;
    inner.text = step.text;
    return inner;
  }
  static const std::set<std::string> known{"as", "action", "casefile", "plan", "clock", "expect"};
  if (!known.contains(step.directive)) bad_line(line, "unknown directive '" + step.directive + "'");
  if (step.directive == "as" || step.directive == "expect") {
    step.args = words(rest, static_cast<std::size_t>(-1), rest);
    if (!rest.empty()) bad_line(line, "unexpected '" + std::string(rest) + "'");
  } else {
    const std::size_t n = arity(step.directive);
    step.args = words(rest, n, rest);
    if (step.args.size() != n) bad_line(line, step.directive + " needs " + std::to_string(n) + " arguments");
    if (!rest.empty()) {
      if (step.directive != "action" && step.directive != "casefile") {
        bad_line(line, "unexpected '" + std::string(rest) + "'");
      }
      try {
        step.payload = json::parse(rest);
      } catch (const json::parse_error& e) {
        bad_line(line, std::string("bad JSON payload: ") + e.what());
      }
    }
  }
  if (step.directive == "as" && step.args.empty()) bad_line(line, "as needs a worker id");
  if (step.directive == "expect" && step.args.empty()) bad_line(line, "expect needs a subject");
  return step;
}

std::string arg(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return {};
  return it->is_string() ? it->get<std::string>() : it->dump();
}

ScenarioStep parse_json_step(const json& j, std::size_t index) {
  ScenarioStep step;
  step.line = index;
  step.text = j.dump();
  if (!j.is_object()) bad_line(index, "step must be an object");
  if (auto ef = j.find("expectFail"); ef != j.end()) {
    auto ec = ef->is_string() ? error_code_from_string(ef->get<std::string>()) : std::nullopt;
    if (!ec) bad_line(index, "unknown error code in expectFail");
    step.expect_error = ec;
  }
  if (j.contains("as")) {
    const json& a = j["as"];
    step.directive = "as";
    step.args.push_back(arg(a, "worker"));
    for (const auto& r : a.value("roles", json::array())) step.args.push_back(r.get<std::string>());
  } else if (j.contains("action")) {
    const json& a = j["action"];
    step.directive = "action";
    step.args = {arg(a, "target"), arg(a, "action")};
    step.payload = a.value("payload", json());
  } else if (j.contains("casefile")) {
    const json& a = j["casefile"];
    step.directive = "casefile";
    step.args = {arg(a, "op"), arg(a, "path")};
    step.payload = a.value("payload", json());
  } else if (j.contains("plan")) {
    const json& a = j["plan"];
    step.directive = "plan";
    step.args = {arg(a, "scope"), arg(a, "entry")};
  } else if (j.contains("clock")) {
    step.directive = "clock";
    step.args = {j["clock"].dump()};
  } else if (j.contains("expect")) {
    const json& e = j["expect"];
    step.directive = "expect";
    if (e.contains("case")) {
      step.args = {"case", arg(e, "case")};
    } else if (e.contains("item")) {
      step.args = {"item", arg(e, "item"), arg(e, "state")};
    } else if (e.contains("milestone")) {
      step.args = {"milestone", arg(e, "milestone"), arg(e, "state")};
    } else if (e.contains("count")) {
      step.args = {"count", arg(e, "count"), arg(e, "state"), arg(e, "n")};
    } else if (e.contains("casefile")) {
      step.args = {"casefile", arg(e, "casefile"), e.value("exists", true) ? "exists" : "absent"};
    } else if (e.contains("actions")) {
      step.args = {"actions", arg(e, "actions")};
      for (const auto& a : e.value("list", json::array())) step.args.push_back(a.get<std::string>());
    } else {
      bad_line(index, "unknown expectation");
    }
  } else {
    bad_line(index, "unknown step");
  }
  if (step.expect_error && (step.directive == "as" || step.directive == "expect")) {
    bad_line(index, "expectFail wraps an action, casefile, plan or clock step");
  }
  return step;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    for (int i = 0; i < 100; ++i) {
      fs::path p = fs::temp_directory_path() /
                   ("casewright-run-" + std::to_string(rd()) + std::to_string(i));
      if (fs::create_directory(p)) {
        path_ = p;
        return;
      }
    }
    throw Error(ErrorCode::io_error, "cannot create a temporary store");
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct ExpectationFailed {
  std::string message;
};

std::string state_dump(const CaseInstance& ci) {
  std::string out = "  case " + ci.state().items[0].id + ": " +
                    std::string(to_string(ci.case_state()));
  for (std::size_t i = 1; i < ci.state().items.size(); ++i) {
    const auto& it = ci.state().items[i];
    out += "\n  " + it.id + ": " + std::string(to_string(it.state));
  }
  return out;
}

void check_expect(const ScenarioStep& step, const CaseInstance& ci, const Actor& actor) {
  const auto& a = step.args;
  auto want = [&](std::size_t n) {
    if (a.size() != n) {
      throw ParseError(ErrorCode::syntax_error,
                       "scenario line " + std::to_string(step.line) + ": malformed expect",
                       step.line);
    }
  };
  auto fail = [&](const std::string& what, const std::string& got) {
    throw ExpectationFailed{"expected " + what + ", got " + got};
  };
  const std::string& subject = a[0];
  if (subject == "case") {
    want(2);
    const std::string got(to_string(ci.case_state()));
    if (got != a[1]) fail("case " + a[1], got);
  } else if (subject == "item") {
    want(3);
    const ItemInstance* it = ci.find(a[1]);
    const std::string got = it ? std::string(to_string(it->state)) : "no such item";
    if (got != a[2]) fail(a[1] + " " + a[2], got);
  } else if (subject == "milestone") {
    want(3);
    auto list = ci.instances_of(a[1]);
    std::string got;
    bool ok = false;
    for (const auto* it : list) {
      const std::string st(to_string(it->state));
      ok = ok || st == a[2];
      got += (got.empty() ? "" : ",") + st;
    }
    if (!ok) fail(a[1] + " " + a[2], got.empty() ? "no instance" : got);
  } else if (subject == "count") {
    want(4);
    std::size_t n = 0;
    for (const auto* it : ci.instances_of(a[1])) {
      if (to_string(it->state) == a[2]) ++n;
    }
    if (std::to_string(n) != a[3]) fail(a[3] + " x " + a[1] + " " + a[2], std::to_string(n));
  } else if (subject == "casefile") {
    want(3);
    const bool exists = ci.state().case_file.exists(a[1]);
    if (a[2] != "exists" && a[2] != "absent") want(0);
    if (exists != (a[2] == "exists")) fail(a[1] + " " + a[2], exists ? "exists" : "absent");
  } else if (subject == "actions") {
    if (a.size() < 2) want(2);
    std::set<std::string> expected(a.begin() + 2, a.end());
    auto list = ci.available_actions(actor, a[1]);
    std::set<std::string> got(list.begin(), list.end());
    if (got != expected) {
      auto join = [](const std::set<std::string>& s) {
        std::string out;
        for (const auto& x : s) out += (out.empty() ? "" : " ") + x;
        return "{" + out + "}";
      };
      fail("actions " + join(expected) + " on " + a[1], join(got));
    }
  } else {
    throw ParseError(ErrorCode::syntax_error,
                     "scenario line " + std::to_string(step.line) + ": unknown expectation '" +
                         subject + "'",
                     step.line);
  }
}

}  // namespace

Scenario Scenario::parse(std::string_view text) {
  Scenario sc;
  const auto body = trim(text);
  if (!body.empty() && (body.front() == '{' || body.front() == '[')) {
    json doc;
    try {
      doc = json::parse(body);
    } catch (const json::parse_error& e) {
      throw ParseError(ErrorCode::syntax_error, "malformed scenario JSON", e.byte);
    }
    const json& steps = doc.is_array() ? doc : doc.value("steps", json::array());
    for (std::size_t i = 0; i < steps.size(); ++i) sc.steps.push_back(parse_json_step(steps[i], i + 1));
    return sc;
  }
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    auto line = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos
                                                                      : end - start));
    ++line_no;
    if (!line.empty() && line.front() != '#') sc.steps.push_back(parse_directive(line, line_no));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return sc;
}

Scenario Scenario::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read scenario " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::vector<CaseModel> load_case_refs(const CaseModel& model, const fs::path& dir) {
  std::vector<CaseModel> out;
  std::set<std::string> seen{model.id};
  auto refs = model.case_refs();
  std::vector<std::string> pending(refs.begin(), refs.end());
  while (!pending.empty()) {
    const std::string ref = pending.back();
    pending.pop_back();
    if (!seen.insert(ref).second) continue;
    const fs::path p = dir / (ref + ".json");
    if (!fs::exists(p)) continue;  // reported when the instance is created
    out.push_back(*load_model_file(p.string()));
    for (const auto& r : out.back().case_refs()) pending.push_back(r);
  }
  return out;
}

ScenarioResult run_scenario(const CaseModel& model, const std::vector<CaseModel>& extra_models,
                            const Scenario& scenario, const ScenarioOptions& options) {
  ScenarioResult result;
  std::optional<TempDir> temp;
  fs::path root = options.store;
  if (root.empty()) {
    temp.emplace();
    root = temp->path();
  }
  auto store = std::make_shared<Store>(root);
  Runtime runtime(store, RuntimeOptions{options.snapshot_every});

  Actor actor{"worker", {}};
  for (const auto& r : model.roles) actor.roles.insert(r.name);

  const ScenarioStep* current = nullptr;
  auto finish_transcript = [&] {
    if (result.instance.empty()) return;
    try {
      const CaseInstance ci = runtime.instance(result.instance);
      for (const auto& e : ci.log()) {
        result.transcript.push_back(e.to_line());
      }
    } catch (const Error&) {
    }
  };

  try {
    for (const auto& m : extra_models) runtime.register_model(m);
    runtime.register_model(model);
    result.instance = runtime.create_instance(model.id);
    const std::string& id = result.instance;

    for (const auto& step : scenario.steps) {
      current = &step;
      result.line = step.line;
      const auto& a = step.args;
      if (step.directive == "as") {
        actor.worker = a[0];
        actor.roles = std::set<std::string>(a.begin() + 1, a.end());
        continue;
      }
      if (step.directive == "expect") {
        try {
          check_expect(step, runtime.instance(id), actor);
        } catch (const ExpectationFailed& f) {
          result.status = ScenarioStatus::expectation_failed;
          result.message = "line " + std::to_string(step.line) + ": " + f.message + "\n" +
                           state_dump(runtime.instance(id));
          finish_transcript();
          return result;
        }
        continue;
      }
      auto execute = [&] {
        if (step.directive == "action") {
          runtime.worker_action(id, actor, a[0], a[1], step.payload);
        } else if (step.directive == "casefile") {
          runtime.case_file_op(id, actor, a[0], a[1], step.payload);
        } else if (step.directive == "plan") {
          runtime.plan(id, actor, a[0], a[1]);
        } else if (step.directive == "clock") {
          std::uint64_t ticks = 0;
          try {
            ticks = std::stoull(a[0]);
          } catch (const std::exception&) {
            throw Error(ErrorCode::invalid_argument, "clock needs a tick count");
          }
          runtime.advance_clock(id, ticks);
        }
      };
      if (step.expect_error) {
        std::optional<ErrorCode> got;
        std::string what;
        try {
          execute();
        } catch (const Error& e) {
          got = e.code();
          what = e.what();
        }
        if (got != step.expect_error) {
          result.status = ScenarioStatus::expectation_failed;
          result.message = "line " + std::to_string(step.line) + ": expected " +
                           std::string(to_string(*step.expect_error)) + ", got " +
                           (got ? std::string(to_string(*got)) + " (" + what + ")" : "success") +
                           "\n" + state_dump(runtime.instance(id));
          finish_transcript();
          return result;
        }
      } else {
        execute();
      }
    }
    current = nullptr;

    // Determinism check: the store must reproduce exactly what is live.
    const std::string live = runtime.instance(id).canonical_snapshot();
    const std::string restored = Store(root).restore(id).canonical_snapshot();
    const std::string replayed = Store(root).restore_from_log(id).canonical_snapshot();
    if (restored != live || replayed != live) {
      result.status = ScenarioStatus::engine_error;
      result.message = "replay mismatch: restored instance differs from the live one";
      finish_transcript();
      return result;
    }
    result.final_snapshot = live;
  } catch (const Error& e) {
    result.status = ScenarioStatus::engine_error;
    result.message = (current ? "line " + std::to_string(current->line) + ": " : std::string()) +
                     std::string(to_string(e.code())) + ": " + e.what();
    finish_transcript();
    return result;
  }
  finish_transcript();
  return result;
}

ScenarioResult run_scenario_files(const fs::path& model_path, const fs::path& scenario_path,
                                  const ScenarioOptions& options) {
  auto model = load_model_file(model_path.string());
  auto extra = load_case_refs(*model, model_path.parent_path());
  return run_scenario(*model, extra, Scenario::load(scenario_path), options);
}

}  // namespace casewright
