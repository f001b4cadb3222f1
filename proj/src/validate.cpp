#include "casewright/validate.hpp"

#include <algorithm>

#include "casewright/error.hpp"
#include "casewright/expression.hpp"

namespace casewright {

namespace {

enum Annotation : unsigned {
  kPlanningTable = 1u << 0,
  kEntry = 1u << 1,
  kExit = 1u << 2,
  kAutoComplete = 1u << 3,
  kCollapsed = 1u << 4,
  kManualActivation = 1u << 5,
  kRepetition = 1u << 6,
  kRequired = 1u << 7,
};

constexpr unsigned kAll = 0xffu;

struct AnnotationInfo {
  Annotation bit;
  const char* rule;
  const char* label;
};

constexpr AnnotationInfo kAnnotations[] = {
    {kPlanningTable, "RULE_PLANNING_TABLE_NOT_APPLICABLE", "planning table"},
    {kEntry, "RULE_ENTRY_NOT_APPLICABLE", "entry criterion"},
    {kExit, "RULE_EXIT_NOT_APPLICABLE", "exit criterion"},
    {kAutoComplete, "RULE_AUTO_COMPLETE_NOT_APPLICABLE", "auto complete decorator"},
    {kCollapsed, "RULE_COLLAPSED_NOT_APPLICABLE", "collapsed flag"},
    {kManualActivation, "RULE_MANUAL_ACTIVATION_NOT_APPLICABLE",
     "manual activation decorator"},
    {kRepetition, "RULE_REPETITION_NOT_APPLICABLE", "repetition decorator"},
    {kRequired, "RULE_REQUIRED_NOT_APPLICABLE", "required decorator"},
};

// Rows of the applicability matrix. Discretionary variants drop `required`.
unsigned applicable(const PlanItemDefinition& item, bool root) {
  if (root) return kPlanningTable | kExit | kAutoComplete;
  switch (item.kind) {
    case ItemKind::stage:
      return kAll;
    case ItemKind::process_task:
    case ItemKind::case_task:
      return kEntry | kExit | kManualActivation | kRepetition | kRequired;
    case ItemKind::human_task_nonblocking:
      return kPlanningTable | kEntry | kManualActivation | kRepetition | kRequired;
    case ItemKind::human_task_blocking:
      return kPlanningTable | kEntry | kExit | kManualActivation | kRepetition |
             kRequired;
    case ItemKind::milestone:
      return kEntry | kRepetition | kRequired;
    case ItemKind::timer_listener:
    case ItemKind::user_listener:
      return 0;
  }
  return 0;
}

unsigned present(const PlanItemDefinition& item) {
  unsigned p = 0;
  if (item.planning_table) p |= kPlanningTable;
  if (!item.entry_criteria.empty()) p |= kEntry;
  if (!item.exit_criteria.empty()) p |= kExit;
  if (item.decorators.auto_complete) p |= kAutoComplete;
  if (item.collapsed) p |= kCollapsed;
  if (item.decorators.manual_activation) p |= kManualActivation;
  if (item.decorators.repetition) p |= kRepetition;
  if (item.decorators.required) p |= kRequired;
  return p;
}

unsigned present(const StrayAnnotations& s) {
  unsigned p = 0;
  if (s.planning_table) p |= kPlanningTable;
  if (s.entry_criterion) p |= kEntry;
  if (s.exit_criterion) p |= kExit;
  if (s.auto_complete) p |= kAutoComplete;
  if (s.collapsed) p |= kCollapsed;
  if (s.manual_activation) p |= kManualActivation;
  if (s.repetition) p |= kRepetition;
  if (s.required) p |= kRequired;
  return p;
}

bool event_valid_for(LifecycleKind kind, EventName event) {
  const auto entries = TransitionTable::standard().entries();
  return std::any_of(entries.begin(), entries.end(), [&](const Transition& t) {
    return t.kind == kind && t.event == event;
  });
}

class Validator {
 public:
  explicit Validator(const CaseModel& m) : m_(m) {}

  std::vector<Diagnostic> run() {
    for (const auto& cf : m_.case_file) {
      report_stray(cf.path, "case file item", present(cf.stray), 0);
    }
    for (ItemIndex i = 0; i < m_.items.size(); ++i) check_item(i);
    return std::move(out_);
  }

 private:
  void add(const std::string& element, const char* rule, std::string message) {
    out_.push_back({Severity::error, element, rule, std::move(message)});
  }

  void report_stray(const std::string& element, const char* what, unsigned have,
                    unsigned allowed) {
    for (const auto& a : kAnnotations) {
      if ((have & a.bit) && !(allowed & a.bit)) {
        add(element, a.rule, std::string("a ") + a.label + " is not applicable to a " + what);
      }
    }
  }

  void check_item(ItemIndex index) {
    const auto& item = m_.items[index];
    const bool root = index == 0;
    const char* what = root ? "case plan" : nullptr;
    std::string kind_name;
    if (!what) {
      kind_name = std::string(item.discretionary ? "discretionary " : "") +
                  std::string(to_string(item.kind));
      what = kind_name.c_str();
    }
    unsigned allowed = applicable(item, root);
    const unsigned have = present(item);

    if (item.discretionary && (allowed & kRequired)) {
      allowed &= ~kRequired;
      if (have & kRequired) {
        add(item.id, "RULE_DISCRETIONARY_NOT_REQUIRED",
            "discretionary items are not part of the plan and cannot be required");
      }
      report_stray(item.id, what, have & ~kRequired, allowed);
    } else {
      report_stray(item.id, what, have, allowed);
    }
    if ((have & kRepetition) && (allowed & kRepetition) && item.entry_criteria.empty()) {
      add(item.id, "RULE_REPETITION_NEEDS_ENTRY",
          "repetition needs at least one entry criterion");
    }
    if (item.discretionary && item.kind != ItemKind::stage && !is_task(item.kind)) {
      add(item.id, "RULE_DISCRETIONARY_KIND",
          "only tasks and stages can be discretionary");
    }
    if (item.kind == ItemKind::case_task && item.case_ref.empty()) {
      add(item.id, "RULE_CASE_TASK_TARGET", "case task needs a caseRef");
    }
    if (item.kind == ItemKind::timer_listener && item.duration == 0) {
      add(item.id, "RULE_TIMER_DURATION", "timer duration must be at least one tick");
    }
    for (auto s : item.entry_criteria) check_sentry(s);
    for (auto s : item.exit_criteria) check_sentry(s);
    if (item.planning_table) check_table(item, *item.planning_table);
  }

  void check_sentry(SentryIndex index) {
    const auto& s = m_.sentries[index];
    if (s.on_parts.empty() && !s.if_part) {
      add(s.id, "RULE_SENTRY_EMPTY", "a sentry needs an onPart or an ifPart");
    }
    for (const auto& part : s.on_parts) {
      if (!part.event) continue;
      std::optional<LifecycleKind> kind;
      if (part.source_kind == SourceKind::element) {
        auto src = m_.item_index(part.source);
        if (src) {
          kind = *src == 0 ? LifecycleKind::case_plan
                           : lifecycle_kind_of(m_.items[*src].kind);
        }
      } else if (part.source_kind == SourceKind::case_file) {
        const auto* cf = m_.find_case_file_item(part.source);
        if (cf) kind = cf->container ? LifecycleKind::file_container : LifecycleKind::file_item;
      }
      if (kind && !event_valid_for(*kind, *part.event)) {
        add(s.id, "RULE_ONPART_EVENT_INVALID",
            "event '" + std::string(to_string(*part.event)) + "' is never raised by '" +
                part.source + "' (" + std::string(to_string(*kind)) + ")");
      }
    }
    if (s.if_part) {
      try {
        parse_expression(*s.if_part);
      } catch (const Error& e) {
        add(s.id, "RULE_IFPART_INVALID", e.what());
      }
    }
  }

  void check_table(const PlanItemDefinition& owner, const PlanningTable& table) {
    if (table.entries.empty()) {
      add(owner.id, "RULE_PLANNING_TABLE_EMPTY", "planning table has no entries");
    }
    for (const auto& role : table.authorized_roles) {
      if (!m_.find_role(role)) {
        add(owner.id, "RULE_UNKNOWN_ROLE", "planning table names unknown role '" + role + "'");
      }
    }
    for (const auto& e : table.entries) {
      if (e.kind != PlanningEntry::Kind::fragment) continue;
      const auto& f = m_.fragments[e.index];
      report_stray(f.id, "plan fragment", present(f.stray), kCollapsed);
      if (f.items.empty()) {
        add(f.id, "RULE_PLAN_FRAGMENT_EMPTY", "plan fragment has no items");
      }
    }
  }

  const CaseModel& m_;
  std::vector<Diagnostic> out_;
};

}  // namespace

std::string_view to_string(Severity s) {
  return s == Severity::error ? "error" : "warning";
}

std::string Diagnostic::to_string() const {
  return std::string(casewright::to_string(severity)) + " " + rule + " " + element +
         ": " + message;
}

nlohmann::json Diagnostic::to_json() const {
  return {{"severity", casewright::to_string(severity)},
          {"element", element},
          {"rule", rule},
          {"message", message}};
}

std::vector<Diagnostic> validate_model(const CaseModel& model) {
  return Validator(model).run();
}

bool has_errors(const std::vector<Diagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::error; });
}

}  // namespace casewright
