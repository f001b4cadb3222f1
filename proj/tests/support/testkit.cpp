#include "testkit.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "casewright/error.hpp"
#include "casewright/instance.hpp"
#include "casewright/lifecycle.hpp"
#include "casewright/model_json.hpp"
#include "casewright/scenario.hpp"
#include "casewright/validate.hpp"

namespace casewright::testkit {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path source_dir() { return CASEWRIGHT_SOURCE_DIR; }
fs::path fixture_dir() { return source_dir() / "tests" / "fixtures"; }
fs::path scenario_dir() { return source_dir() / "tests" / "scenarios"; }

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void summarize(CheckResult& r, const std::string& what) {
  if (r.ok) {
    r.detail = what;
  } else {
    r.detail = std::to_string(r.failures.size()) + " failure(s); first: " + r.failures.front();
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Lifecycle

CheckResult check_lifecycle_conformance() {
  CheckResult r;
  const auto& table = TransitionTable::standard();

  // Event names per kind.
  const json names = json::parse(slurp(fixture_dir() / "standard_events.json"));
  std::set<std::string> fixture_union;
  for (const auto& [kind_name, events] : names.items()) {
    auto kind = lifecycle_kind_from_string(kind_name);
    if (!kind) {
      r.fail("fixture kind '" + kind_name + "' unknown to the engine");
      continue;
    }
    std::set<std::string> expected = events.get<std::set<std::string>>();
    fixture_union.insert(expected.begin(), expected.end());
    std::set<std::string> encoded;
    for (const auto& t : table.entries()) {
      if (t.kind == *kind) encoded.insert(std::string(to_string(t.event)));
    }
    for (const auto& e : expected) {
      if (!encoded.contains(e)) r.fail(kind_name + ": missing event " + e);
    }
    for (const auto& e : encoded) {
      if (!expected.contains(e)) r.fail(kind_name + ": extra event " + e);
    }
  }
  for (auto k : all_lifecycle_kinds()) {
    if (!names.contains(std::string(to_string(k)))) {
      r.fail("kind " + std::string(to_string(k)) + " missing from fixture");
    }
  }
  std::set<std::string> standard;
  for (auto e : all_event_names()) {
    if (is_standard_event(e)) standard.insert(std::string(to_string(e)));
  }
  if (standard != fixture_union) r.fail("standard event vocabulary differs from the fixture");

  // Full transition list.
  struct Row {
    std::string to;
    bool worker;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Row> rows;
  std::istringstream in(slurp(fixture_dir() / "transitions.txt"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string k, from, ev, to, who;
    ls >> k >> from >> ev >> to >> who;
    rows[{k, from, ev}] = Row{to, who == "worker"};
  }
  std::size_t encoded_rows = 0;
  for (const auto& t : table.entries()) {
    ++encoded_rows;
    auto key = std::make_tuple(std::string(to_string(t.kind)), std::string(to_string(t.from)),
                               std::string(to_string(t.event)));
    auto it = rows.find(key);
    if (it == rows.end()) {
      r.fail("extra transition " + std::get<0>(key) + " " + std::get<1>(key) + " " +
             std::get<2>(key));
      continue;
    }
    const std::string to = t.to ? std::string(to_string(*t.to)) : "restore";
    if (to != it->second.to || t.worker != it->second.worker) {
      r.fail("transition " + std::get<0>(key) + " " + std::get<1>(key) + " " + std::get<2>(key) +
             " differs from fixture");
    }
  }
  if (encoded_rows != rows.size()) {
    r.fail("table has " + std::to_string(encoded_rows) + " rows, fixture " +
           std::to_string(rows.size()));
  }

  // Exhaustive scan.
  std::size_t scanned = 0;
  for (auto k : all_lifecycle_kinds()) {
    for (auto s : all_lifecycle_states()) {
      for (auto e : all_event_names()) {
        ++scanned;
        auto key = std::make_tuple(std::string(to_string(k)), std::string(to_string(s)),
                                   std::string(to_string(e)));
        auto it = rows.find(key);
        const std::string label = std::get<0>(key) + " " + std::get<1>(key) + " " + std::get<2>(key);
        try {
          const auto to = apply_transition(k, s, e, LifecycleState::enabled);
          if (it == rows.end()) {
            r.fail("unlisted " + label + " accepted");
          } else {
            const std::string want = it->second.to == "restore" ? "enabled" : it->second.to;
            if (std::string(to_string(to)) != want) r.fail(label + " went to the wrong state");
          }
        } catch (const Error& err) {
          if (err.code() != ErrorCode::illegal_transition) {
            r.fail(label + " raised " + std::string(to_string(err.code())));
          } else if (it != rows.end()) {
            r.fail("listed " + label + " rejected");
          }
        }
      }
    }
  }
  summarize(r, std::to_string(encoded_rows) + " transitions, " + std::to_string(scanned) +
                   " triples scanned");
  return r;
}

// ---------------------------------------------------------------------------
// Scenario corpus and replay

namespace {

struct CorpusRun {
  std::string name;
  ScenarioResult result;
};

std::vector<CorpusRun> run_corpus(std::uint64_t snapshot_every) {
  const auto model_path = fixture_dir() / "complaints.json";
  auto model = load_model_file(model_path.string());
  auto extras = load_case_refs(*model, fixture_dir());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(scenario_dir())) {
    if (e.path().extension() == ".scn") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<CorpusRun> out;
  for (const auto& f : files) {
    ScenarioOptions opts;
    opts.snapshot_every = snapshot_every;
    out.push_back({f.filename().string(),
                   run_scenario(*model, extras, Scenario::load(f), opts)});
  }
  return out;
}

}  // namespace

CheckResult check_scenario_corpus(std::uint64_t snapshot_every) {
  CheckResult r;
  std::set<char> covered;
  std::size_t count = 0;
  for (const auto& run : run_corpus(snapshot_every)) {
    ++count;
    if (run.result.status != ScenarioStatus::passed) {
      r.fail(run.name + " line " + std::to_string(run.result.line) + ": " + run.result.message);
      continue;
    }
    if (run.name.size() > 2 && run.name[1] == '_') covered.insert(run.name[0]);
  }
  if (count < 8) r.fail("corpus has only " + std::to_string(count) + " scripts");
  for (char c = 'a'; c <= 'h'; ++c) {
    if (!covered.contains(c)) r.fail(std::string("no passing script for behaviour (") + c + ")");
  }
  summarize(r, std::to_string(count) + " scripts, behaviours a-h covered");
  return r;
}

CheckResult check_replay_determinism() {
  CheckResult r;
  // run_scenario itself restores from snapshot+tail and from the bare log and
  // reports any byte difference as an engine error.
  const std::array<std::uint64_t, 3> intervals{1, 5, 0};
  std::vector<std::vector<CorpusRun>> runs;
  for (auto n : intervals) runs.push_back(run_corpus(n));
  for (std::size_t i = 0; i < runs[0].size(); ++i) {
    for (std::size_t k = 0; k < runs.size(); ++k) {
      const auto& res = runs[k][i].result;
      if (res.status != ScenarioStatus::passed) {
        r.fail(runs[k][i].name + " (N=" + std::to_string(intervals[k]) + "): " + res.message);
      }
      if (res.final_snapshot.empty()) r.fail(runs[k][i].name + ": no final snapshot");
      if (k > 0 && (res.final_snapshot != runs[0][i].result.final_snapshot ||
                    res.transcript != runs[0][i].result.transcript)) {
        r.fail(runs[k][i].name + ": N=" + std::to_string(intervals[k]) +
               " differs from N=1");
      }
    }
  }
  summarize(r, std::to_string(runs[0].size()) + " scripts x N in {1,5,never}");
  return r;
}

// ---------------------------------------------------------------------------
// Applicability matrix

namespace {

enum Column { planning, entry, exit_, autoc, collapsed, manual, repetition, required, kColumns };

constexpr std::array<const char*, kColumns> kColumnNames{
    "planning table", "entry criterion", "exit criterion", "auto complete",
    "collapsed",      "manual activation", "repetition",    "required"};

struct MatrixRow {
  const char* name;
  const char* kind;  // item kind, or "case" / "fragment" / "file"
  bool discretionary;
  const char* checks;  // one char per column, 'x' = checkmark
};

// Element kinds against annotators; "x" marks an applicable cell.
constexpr MatrixRow kMatrix[] = {
    {"case plan", "case", false, "x.xx...."},
    {"stage", "stage", false, "xxxxxxxx"},
    {"discretionary stage", "stage", true, "xxxxxxx."},
    {"non-blocking human task", "human_task_nonblocking", false, "xx...xxx"},
    {"discretionary non-blocking human task", "human_task_nonblocking", true, "xx...xx."},
    {"blocking human task", "human_task_blocking", false, "xxx..xxx"},
    {"discretionary blocking human task", "human_task_blocking", true, "xxx..xx."},
    {"process task", "process_task", false, ".xx..xxx"},
    {"discretionary process task", "process_task", true, ".xx..xx."},
    {"case task", "case_task", false, ".xx..xxx"},
    {"discretionary case task", "case_task", true, ".xx..xx."},
    {"plan fragment", "fragment", true, "....x..."},
    {"case file item", "file", false, "........"},
    {"milestone", "milestone", false, ".x....xx"},
    {"user event", "user_listener", false, "........"},
    {"timer event", "timer_listener", false, "........"},
};

void annotate(json& e, int col, bool with_entry) {
  switch (col) {
    case planning:
      e["planningTable"] = {{"entries", json::array({{{"id", "tableTask"}, {"kind", "human_task_blocking"}}})}};
      break;
    case entry:
      e["entryCriteria"] = json::array({{{"id", "en"}, {"on", json::array({{{"source", "doc"}, {"event", "create"}}})}}});
      break;
    case exit_:
      e["exitCriteria"] = json::array({{{"id", "ex"}, {"on", json::array({{{"source", "doc"}, {"event", "update"}}})}}});
      break;
    case autoc:
      e["autoComplete"] = true;
      break;
    case collapsed:
      e["collapsed"] = true;
      break;
    case manual:
      e["manualActivation"] = true;
      break;
    case repetition:
      e["repetition"] = true;
      if (with_entry) annotate(e, entry, false);
      break;
    case required:
      e["required"] = true;
      break;
    default:
      break;
  }
}

json matrix_model(const MatrixRow& row, int col) {
  json doc = {{"id", "matrix"},
              {"caseFile", json::array({{{"path", "doc"}}})},
              {"plan", {{"id", "root"}, {"children", json::array()}}}};
  const std::string kind = row.kind;
  const bool entry_ok = row.checks[entry] == 'x';
  if (kind == "case") {
    if (col < 0) return doc;
    json& plan = doc["plan"];
    switch (col) {
      case planning:
      case exit_:
      case autoc: {
        json tmp = json::object();
        annotate(tmp, col, false);
        for (auto& [k, v] : tmp.items()) doc[k] = v;
        break;
      }
      default:
        annotate(plan, col, false);
    }
    return doc;
  }
  if (kind == "file") {
    json item = {{"path", "doc2"}};
    if (col >= 0) annotate(item, col, false);
    doc["caseFile"].push_back(item);
    return doc;
  }
  json e;
  if (kind == "fragment") {
    e = {{"id", "frag"},
         {"kind", "plan_fragment"},
         {"items", json::array({{{"id", "fragTask"}, {"kind", "human_task_blocking"}}})}};
  } else {
    e = {{"id", "x"}, {"kind", kind}};
    if (kind == "case_task") e["caseRef"] = "other";
    if (kind == "timer_listener") e["duration"] = 5;
  }
  if (col >= 0) annotate(e, col, entry_ok);
  if (row.discretionary) {
    doc["planningTable"] = {{"entries", json::array({e})}};
  } else {
    doc["plan"]["children"].push_back(e);
  }
  return doc;
}

}  // namespace

CheckResult check_applicability_matrix() {
  CheckResult r;
  int cells = 0;
  for (const auto& row : kMatrix) {
    for (int col = -1; col < kColumns; ++col) {
      const std::string label =
          std::string(row.name) + " / " + (col < 0 ? "bare" : kColumnNames[col]);
      std::vector<Diagnostic> diags;
      try {
        diags = validate_model(parse_model(matrix_model(row, col).dump()));
      } catch (const Error& e) {
        r.fail(label + ": model rejected by the parser: " + e.what());
        continue;
      }
      const std::size_t want = (col < 0 || row.checks[col] == 'x') ? 0 : 1;
      if (col >= 0) ++cells;
      if (diags.size() != want) {
        std::string got;
        for (const auto& d : diags) got += " [" + d.to_string() + "]";
        r.fail(label + ": expected " + std::to_string(want) + " diagnostic(s), got " +
               std::to_string(diags.size()) + got);
      }
    }
  }
  summarize(r, std::to_string(cells) + " cells checked");
  return r;
}

// ---------------------------------------------------------------------------
// Small-model oracle

namespace {

struct SPart {
  std::string source;
  std::string event;  // empty: criterion connector
};

struct SSentry {
  std::string id;
  std::vector<SPart> parts;
};

struct SItem {
  char kind = 'L';  // L user listener, M milestone, T blocking human task
  std::string id;
  bool manual = false;
  bool required = false;
  std::vector<SSentry> entry;
  std::vector<SSentry> exit;
};

struct SModel {
  bool auto_complete = false;
  std::vector<SItem> items;
};

using Stimulus = std::pair<std::string, std::string>;  // target, action

SModel generate_small(std::mt19937& rng) {
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  SModel m;
  m.auto_complete = pick(2) == 0;
  const int n = 1 + pick(4);
  for (int i = 0; i < n; ++i) {
    SItem it;
    it.kind = "LMT"[pick(3)];
    it.id = std::string(1, static_cast<char>(std::tolower(it.kind))) + std::to_string(i);
    if (it.kind == 'T') it.manual = pick(3) == 0;
    if (it.kind != 'L') it.required = pick(3) == 0;
    m.items.push_back(it);
  }
  int sentry_no = 0;
  std::vector<std::string> sentry_ids;
  auto make_sentry = [&](const SItem& owner) {
    SSentry s;
    s.id = "s" + std::to_string(sentry_no++);
    const int parts = 1 + pick(2);
    for (int p = 0; p < parts; ++p) {
      if (!sentry_ids.empty() && pick(5) == 0) {
        s.parts.push_back({sentry_ids[pick(static_cast<int>(sentry_ids.size()))], ""});
        continue;
      }
      const SItem& src = m.items[pick(static_cast<int>(m.items.size()))];
      if (src.id == owner.id) continue;
      if (src.kind == 'T') {
        s.parts.push_back({src.id, std::array{"start", "complete", "terminate"}[pick(3)]});
      } else {
        s.parts.push_back({src.id, pick(4) == 0 ? "terminate" : "occur"});
      }
    }
    if (s.parts.empty()) s.parts.push_back({"nobody", ""});
    return s;
  };
  for (auto& it : m.items) {
    if (it.kind == 'L') continue;
    const int entries = std::array{0, 0, 1, 1, 1, 2}[pick(6)];
    for (int e = 0; e < entries; ++e) {
      it.entry.push_back(make_sentry(it));
      sentry_ids.push_back(it.entry.back().id);
    }
    if (it.kind == 'T' && pick(3) == 0) {
      it.exit.push_back(make_sentry(it));
      sentry_ids.push_back(it.exit.back().id);
    }
  }
  // Placeholder connectors point at the first sentry, or are dropped.
  for (auto& it : m.items) {
    for (auto* list : {&it.entry, &it.exit}) {
      for (auto& s : *list) {
        for (auto& p : s.parts) {
          if (p.source == "nobody") p.source = sentry_ids.front();
        }
      }
    }
  }
  return m;
}

json small_to_json(const SModel& m) {
  auto sentries = [](const std::vector<SSentry>& list) {
    json out = json::array();
    for (const auto& s : list) {
      json on = json::array();
      for (const auto& p : s.parts) {
        json part = {{"source", p.source}};
        if (!p.event.empty()) part["event"] = p.event;
        on.push_back(part);
      }
      out.push_back({{"id", s.id}, {"on", on}});
    }
    return out;
  };
  json children = json::array();
  for (const auto& it : m.items) {
    json e = {{"id", it.id},
              {"kind", it.kind == 'L'   ? "user_listener"
                       : it.kind == 'M' ? "milestone"
                                        : "human_task_blocking"}};
    if (it.manual) e["manualActivation"] = true;
    if (it.required) e["required"] = true;
    if (!it.entry.empty()) e["entryCriteria"] = sentries(it.entry);
    if (!it.exit.empty()) e["exitCriteria"] = sentries(it.exit);
    children.push_back(e);
  }
  json doc = {{"id", "small"}, {"plan", {{"id", "root"}, {"children", children}}}};
  if (m.auto_complete) doc["autoComplete"] = true;
  return doc;
}

std::vector<Stimulus> alphabet(const SModel& m) {
  std::vector<Stimulus> out;
  for (const auto& it : m.items) {
    switch (it.kind) {
      case 'L':
        out.push_back({it.id, "occur"});
        break;
      case 'M':
        out.push_back({it.id, "terminate"});
        break;
      default:
        out.push_back({it.id, "claim"});
        out.push_back({it.id, "complete"});
        out.push_back({it.id, "terminate"});
        if (it.manual) {
          out.push_back({it.id, "manualStart"});
          out.push_back({it.id, "disable"});
        }
    }
  }
  if (!m.auto_complete) out.push_back({"case", "complete"});
  return out;
}

// Straightforward re-statement of the execution rules for this restricted
// model class, kept free of the engine's data structures.
class Reference {
 public:
  explicit Reference(const SModel& m) : m_(m) {
    for (std::size_t i = 0; i < m.items.size(); ++i) {
      items_.push_back({"available", false, false});
      for (const auto& s : m.items[i].entry) sentries_.push_back({i, true, &s, {}, false});
      for (const auto& s : m.items[i].exit) sentries_.push_back({i, false, &s, {}, false});
    }
    for (std::size_t i = 0; i < m.items.size(); ++i) {
      const auto& d = m.items[i];
      if (!d.entry.empty() || d.kind == 'L') continue;
      if (d.kind == 'M') {
        move(i, "occurred", "occur");
      } else {
        move(i, d.manual ? "enabled" : "active", d.manual ? "enable" : "start");
      }
    }
    settle();
  }

  bool apply(const Stimulus& s) {
    if (s.first == "case") {
      if (case_ != "active" || !ready()) return false;
      complete_case();
      settle();
      return true;
    }
    if (case_ != "active") return false;
    std::size_t i = 0;
    while (m_.items[i].id != s.first) ++i;
    auto& it = items_[i];
    const std::string& a = s.second;
    if (a == "occur") {
      if (it.state != "available") return false;
      move(i, "occurred", "occur");
    } else if (a == "claim") {
      if (it.state != "active" || it.claimed) return false;
      it.claimed = true;
    } else if (a == "complete") {
      if (it.state != "active" || !it.claimed) return false;
      move(i, "completed", "complete");
    } else if (a == "manualStart") {
      if (it.state != "enabled") return false;
      move(i, "active", "manualStart");
    } else if (a == "disable") {
      if (it.state != "enabled") return false;
      move(i, "disabled", "disable");
    } else if (a == "terminate") {
      const bool task = m_.items[i].kind == 'T';
      const bool ok = task ? (it.state == "available" || it.state == "enabled" ||
                              it.state == "disabled" || it.state == "active")
                           : it.state == "available";
      if (!ok) return false;
      move(i, "terminated", "terminate");
    } else {
      return false;
    }
    settle();
    return true;
  }

  std::string key() const {
    std::string k = "case:" + case_;
    for (std::size_t i = 0; i < items_.size(); ++i) {
      k += " " + m_.items[i].id + ":" + items_[i].state + (items_[i].claimed ? "*" : "");
    }
    return k;
  }

 private:
  struct RItem {
    std::string state;
    bool claimed;
    bool started;
  };
  struct RSentry {
    std::size_t owner;
    bool entry;
    const SSentry* def;
    std::set<std::size_t> seen;
    bool armed;
  };

  static bool finished(const std::string& s) {
    return s == "completed" || s == "terminated" || s == "occurred";
  }

  bool alive(const RSentry& s) const {
    const std::string& st = items_[s.owner].state;
    return s.entry ? st == "available" : !finished(st);
  }

  void signal(const std::string& source, const std::string& event) {
    for (auto& s : sentries_) {
      if (s.armed || !alive(s)) continue;
      bool changed = false;
      for (std::size_t k = 0; k < s.def->parts.size(); ++k) {
        const auto& p = s.def->parts[k];
        const bool hit = p.event.empty() ? event.empty() && p.source == source
                                         : p.event == event && p.source == source;
        if (hit && s.seen.insert(k).second) changed = true;
      }
      if (changed && s.seen.size() == s.def->parts.size()) s.armed = true;
    }
  }

  void move(std::size_t i, const std::string& to, const std::string& event) {
    items_[i].state = to;
    if (to == "active") items_[i].started = true;
    signal(m_.items[i].id, event);
  }

  bool ready() const {
    for (std::size_t i = 0; i < items_.size(); ++i) {
      const auto& it = items_[i];
      if (it.state == "active" || it.state == "enabled") return false;
      if (it.started && !finished(it.state)) return false;
      if (m_.items[i].required && it.state != "completed" && it.state != "occurred") return false;
    }
    return true;
  }

  void complete_case() {
    case_ = "completed";
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (!finished(items_[i].state)) move(i, "terminated", "terminate");
    }
  }

  void settle() {
    for (;;) {
      bool fired = false;
      for (auto& s : sentries_) {
        if (!s.armed || !alive(s)) continue;
        s.armed = false;
        s.seen.clear();
        signal(s.def->id, "");
        const auto& d = m_.items[s.owner];
        if (!s.entry) {
          move(s.owner, "terminated", "exit");
        } else if (d.kind == 'M') {
          move(s.owner, "occurred", "occur");
        } else {
          move(s.owner, d.manual ? "enabled" : "active", d.manual ? "enable" : "start");
        }
        fired = true;
        break;
      }
      if (fired) continue;
      if (m_.auto_complete && case_ == "active" && ready()) {
        complete_case();
        continue;
      }
      break;
    }
  }

  const SModel& m_;
  std::string case_ = "active";
  std::vector<RItem> items_;
  std::vector<RSentry> sentries_;
};

std::string engine_key(const CaseInstance& ci) {
  std::string k = "case:" + std::string(to_string(ci.case_state()));
  for (std::size_t i = 1; i < ci.state().items.size(); ++i) {
    const auto& it = ci.state().items[i];
    k += " " + it.id + ":" + std::string(to_string(it.state)) + (it.claimed_by.empty() ? "" : "*");
  }
  return k;
}

}  // namespace

CheckResult check_small_model_oracle(int models, std::uint32_t seed) {
  CheckResult r;
  std::mt19937 rng(seed);
  std::size_t sequences = 0;
  std::size_t states = 0;
  const Actor actor{"w", {}};
  for (int n = 0; n < models; ++n) {
    const SModel sm = generate_small(rng);
    const std::string text = small_to_json(sm).dump();
    std::shared_ptr<const CaseModel> model;
    try {
      model = std::make_shared<const CaseModel>(parse_model(text));
    } catch (const Error& e) {
      r.fail("generated model rejected: " + std::string(e.what()) + " " + text);
      continue;
    }
    const auto letters = alphabet(sm);
    std::set<std::string> engine_states;
    std::set<std::string> reference_states;
    std::string first_diff;
    std::function<void(const CaseInstance&, const Reference&, int, const std::string&)> walk =
        [&](const CaseInstance& ci, const Reference& ref, int depth, const std::string& path) {
          ++sequences;
          const std::string ek = engine_key(ci);
          const std::string rk = ref.key();
          engine_states.insert(ek);
          reference_states.insert(rk);
          if (ek != rk && first_diff.empty()) {
            first_diff = "after [" + path + "] engine {" + ek + "} reference {" + rk + "}";
          }
          if (depth == 3) return;
          for (const auto& s : letters) {
            CaseInstance next = ci;
            Reference rnext = ref;
            try {
              next.worker_action(actor, s.first, s.second);
            } catch (const Error&) {
            }
            rnext.apply(s);
            walk(next, rnext, depth + 1, path + " " + s.first + "." + s.second);
          }
        };
    try {
      walk(CaseInstance::create(model, "small-1"), Reference(sm), 0, "");
    } catch (const Error& e) {
      r.fail("engine error on model " + text + ": " + e.what());
      continue;
    }
    states += engine_states.size();
    if (engine_states != reference_states) {
      r.fail("reachable sets differ for " + text + "; " + first_diff);
    }
  }
  summarize(r, std::to_string(models) + " models, " + std::to_string(sequences) +
                   " sequences, " + std::to_string(states) + " reachable states, sets equal");
  return r;
}

// ---------------------------------------------------------------------------
// Required semantics

namespace {

json random_children(std::mt19937& rng, int depth, int& serial, std::vector<std::string>& listeners) {
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  json out = json::array();
  const int n = 1 + pick(depth == 0 ? 5 : 3);
  for (int i = 0; i < n; ++i) {
    const std::string id = "i" + std::to_string(serial++);
    const char* kinds[] = {"milestone", "user_listener", "human_task_blocking", "process_task",
                           "human_task_nonblocking", "stage"};
    std::string kind = kinds[pick(depth < 2 ? 6 : 5)];
    json e = {{"id", id}, {"kind", kind}};
    if (kind == "user_listener") {
      listeners.push_back(id);
      out.push_back(e);
      continue;
    }
    bool has_entry = false;
    if (!listeners.empty() && pick(2) == 0) {
      const std::string src = listeners[pick(static_cast<int>(listeners.size()))];
      e["entryCriteria"] = json::array(
          {{{"id", id + "_en"}, {"on", json::array({{{"source", src}, {"event", "occur"}}})}}});
      has_entry = true;
    }
    if (pick(2) == 0) e["required"] = true;
    if (has_entry && pick(4) == 0) e["repetition"] = true;
    if (kind != "milestone" && pick(3) == 0) e["manualActivation"] = true;
    if (kind == "stage") {
      if (pick(2) == 0) e["autoComplete"] = true;
      e["children"] = random_children(rng, depth + 1, serial, listeners);
    }
    out.push_back(e);
  }
  return out;
}

// Replays the log with the lifecycle table and checks every completion of an
// auto-complete scope against the children's states just before it.
void monitor(const CaseInstance& ci, CheckResult& r, const std::string& text) {
  struct Row {
    LifecycleKind kind;
    LifecycleState state = LifecycleState::absent;
    std::optional<LifecycleState> pre;
    bool started = false;
    bool required = false;
    bool repetition = false;
    bool auto_scope = false;
    std::string def;
    std::optional<std::string> parent;
  };
  std::map<std::string, Row> rows;
  const auto& m = ci.model();
  for (const auto& it : ci.state().items) {
    Row row;
    row.kind = ci.lifecycle_kind(it);
    const auto& d = m.items[it.def];
    row.required = d.decorators.required;
    row.repetition = d.decorators.repetition;
    row.auto_scope = it.def == 0 ? m.auto_complete()
                                 : (d.kind == ItemKind::stage && d.decorators.auto_complete);
    row.def = d.id;
    if (it.parent) row.parent = ci.state().items[*it.parent].id;
    rows[it.id] = row;
  }
  for (const auto& e : ci.log()) {
    auto it = rows.find(e.source);
    if (it == rows.end()) continue;
    auto ev = event_name_from_string(e.name);
    if (!ev || *ev == EventName::claim) continue;
    Row& row = it->second;
    if (*ev == EventName::complete && row.auto_scope) {
      // A repeating required item is satisfied by any finished instance; a
      // later repetition that never started does not hold the scope open.
      std::map<std::string, bool> required_done;
      for (const auto& [id, child] : rows) {
        if (child.parent != e.source || !child.required) continue;
        required_done[child.def] |= child.state == LifecycleState::completed ||
                                   child.state == LifecycleState::occurred;
      }
      for (const auto& [id, child] : rows) {
        if (child.parent != e.source || child.state == LifecycleState::absent) continue;
        if (is_terminal(child.kind, child.state)) continue;
        const auto rd = required_done.find(child.def);
        const bool waived = !child.started && child.repetition && rd != required_done.end() &&
                            rd->second;
        if (child.started || (child.required && !waived)) {
          r.fail(e.source + " completed at seq " + std::to_string(e.seq) + " while " + id +
                 " was " + std::string(to_string(child.state)) + " in " + text);
        }
      }
      for (const auto& [def, done] : required_done) {
        if (!done) r.fail(e.source + " completed without required " + def + " in " + text);
      }
    }
    const LifecycleState from = row.state;
    try {
      row.state = apply_transition(row.kind, from, *ev, row.pre);
    } catch (const Error&) {
      r.fail("log replays an illegal " + e.name + " on " + e.source);
      return;
    }
    if (*ev == EventName::suspend || *ev == EventName::parentSuspend) row.pre = from;
    if (row.state == LifecycleState::active) row.started = true;
  }
}

}  // namespace

CheckResult check_required_semantics(int models, std::uint32_t seed) {
  CheckResult r;
  std::mt19937 rng(seed);
  auto pick = [&](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  const Actor actor{"w", {}};
  std::size_t steps = 0;
  std::size_t completions = 0;
  for (int n = 0; n < models && r.failures.size() < 5; ++n) {
    int serial = 0;
    std::vector<std::string> listeners;
    json doc = {{"id", "prop"},
                {"autoComplete", true},
                {"plan", {{"id", "root"}, {"children", random_children(rng, 0, serial, listeners)}}}};
    const std::string text = doc.dump();
    std::shared_ptr<const CaseModel> model;
    try {
      model = std::make_shared<const CaseModel>(parse_model(text));
      CaseInstance ci = CaseInstance::create(model, "prop-1");
      for (int step = 0; step < 25; ++step) {
        std::vector<std::pair<std::string, std::string>> moves;
        for (const auto& it : ci.state().items) {
          const std::string target = &it == &ci.state().items[0] ? "case" : it.id;
          for (const auto& a : ci.available_actions(actor, target)) {
            // Terminal case moves end the walk too early; keep them rare.
            if (target == "case" && pick(4) != 0) continue;
            moves.push_back({target, a});
          }
        }
        if (moves.empty()) break;
        const auto& mv = moves[pick(moves.size())];
        json payload = nullptr;
        if (const auto* it = ci.find(mv.first);
            it && mv.first != "case" && model->items[it->def].kind == ItemKind::process_task &&
            (mv.second == "complete" || mv.second == "fault")) {
          payload = {{"token", "t"}};
        }
        ci.worker_action(actor, mv.first, mv.second, payload);
        ++steps;
      }
      for (const auto& e : ci.log()) {
        if (e.name == "complete" && ci.find(e.source)) ++completions;
      }
      monitor(ci, r, text);
    } catch (const Error& e) {
      r.fail(std::string("unexpected ") + e.what() + " in " + text);
    }
  }
  summarize(r, std::to_string(models) + " models, " + std::to_string(steps) + " random steps, " +
                   std::to_string(completions) + " completions checked");
  return r;
}

}  // namespace casewright::testkit
