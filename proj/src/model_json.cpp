#include "casewright/model_json.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "casewright/error.hpp"

namespace casewright {

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::string& ptr, const std::string& what) {
  throw Error(ErrorCode::schema_violation, (ptr.empty() ? "/" : ptr) + ": " + what);
}

bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto first = static_cast<unsigned char>(s.front());
  if (!std::isalpha(first) && s.front() != '_') return false;
  for (char c : s) {
    auto u = static_cast<unsigned char>(c);
    if (!std::isalnum(u) && c != '_' && c != '-') return false;
  }
  return true;
}

bool valid_path(std::string_view s) {
  if (s.empty()) return false;
  std::size_t start = 0;
  for (;;) {
    auto slash = s.find('/', start);
    auto seg = s.substr(start, slash == std::string_view::npos
                                   ? std::string_view::npos
                                   : slash - start);
    if (!valid_identifier(seg)) return false;
    if (slash == std::string_view::npos) return true;
    start = slash + 1;
  }
}

const std::set<std::string> kStrayKeys{
    "planningTable",     "entryCriteria", "exitCriteria", "autoComplete",
    "collapsed",         "manualActivation", "repetition", "required",
};

class Reader {
 public:
  CaseModel read(const json& doc) {
    require_object(doc, "");
    check_keys(doc, "", {"id", "name", "roles", "caseFile", "plan",
                         "exitCriteria", "planningTable", "autoComplete"});
    model_.id = identifier(doc, "", "id");
    model_.name = optional_string(doc, "", "name");
    if (auto it = doc.find("roles"); it != doc.end()) read_roles(*it, "/roles");
    if (auto it = doc.find("caseFile"); it != doc.end()) {
      const json& arr = require_array(*it, "/caseFile");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        read_case_file_item(arr[i], "/caseFile/" + std::to_string(i),
                            std::nullopt);
      }
    }
    auto plan = doc.find("plan");
    if (plan == doc.end()) schema_error("", "missing required key 'plan'");
    read_root(*plan, doc);
    resolve_on_parts();
    return std::move(model_);
  }

 private:
  static void require_object(const json& j, const std::string& ptr) {
    if (!j.is_object()) schema_error(ptr, "object expected");
  }
  static const json& require_array(const json& j, const std::string& ptr) {
    if (!j.is_array()) schema_error(ptr, "array expected");
    return j;
  }
  static void check_keys(const json& j, const std::string& ptr,
                         std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, value] : j.items()) {
      bool ok = false;
      for (auto a : allowed) ok = ok || a == key;
      if (!ok) schema_error(ptr, "unknown key '" + key + "'");
    }
  }
  static std::string optional_string(const json& j, const std::string& ptr,
                                     const char* key) {
    auto it = j.find(key);
    if (it == j.end()) return {};
    if (!it->is_string()) schema_error(ptr + "/" + key, "string expected");
    return it->get<std::string>();
  }
  static bool optional_bool(const json& j, const std::string& ptr,
                            const char* key) {
    auto it = j.find(key);
    if (it == j.end()) return false;
    if (!it->is_boolean()) schema_error(ptr + "/" + key, "boolean expected");
    return it->get<bool>();
  }

  std::string identifier(const json& j, const std::string& ptr, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) schema_error(ptr, std::string("missing required key '") + key + "'");
    if (!it->is_string() || !valid_identifier(it->get<std::string>())) {
      schema_error(ptr + "/" + key,
                   "identifier expected ([A-Za-z_][A-Za-z0-9_-]*)");
    }
    return it->get<std::string>();
  }

  void claim_id(const std::string& id, const std::string& ptr) {
    if (!ids_.insert(id).second) {
      throw Error(ErrorCode::duplicate_id, ptr + ": duplicate id '" + id + "'");
    }
  }

  void read_roles(const json& j, const std::string& ptr) {
    require_array(j, ptr);
    std::set<std::string> names;
    for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string p = ptr + "/" + std::to_string(i);
      require_object(j[i], p);
      check_keys(j[i], p, {"name", "permissions"});
      RoleDef role;
      role.name = identifier(j[i], p, "name");
      if (!names.insert(role.name).second) {
        throw Error(ErrorCode::duplicate_id, p + ": duplicate role '" + role.name + "'");
      }
      if (auto it = j[i].find("permissions"); it != j[i].end()) {
        require_array(*it, p + "/permissions");
        for (std::size_t k = 0; k < it->size(); ++k) {
          const auto& v = (*it)[k];
          auto perm = v.is_string() ? permission_from_string(v.get<std::string>())
                                    : std::nullopt;
          if (!perm) {
            schema_error(p + "/permissions/" + std::to_string(k),
                         "unknown permission");
          }
          role.permissions.insert(*perm);
        }
      }
      model_.roles.push_back(std::move(role));
    }
  }

  StrayAnnotations read_stray(const json& j, const std::string& ptr) {
    StrayAnnotations s;
    auto non_empty_array = [&](const char* key) {
      auto it = j.find(key);
      if (it == j.end()) return false;
      require_array(*it, ptr + "/" + key);
      return !it->empty();
    };
    s.planning_table = j.contains("planningTable");
    s.entry_criterion = non_empty_array("entryCriteria");
    s.exit_criterion = non_empty_array("exitCriteria");
    s.auto_complete = optional_bool(j, ptr, "autoComplete");
    s.collapsed = optional_bool(j, ptr, "collapsed");
    s.manual_activation = optional_bool(j, ptr, "manualActivation");
    s.repetition = optional_bool(j, ptr, "repetition");
    s.required = optional_bool(j, ptr, "required");
    return s;
  }

  void read_case_file_item(const json& j, const std::string& ptr,
                           std::optional<std::uint32_t> parent) {
    require_object(j, ptr);
    for (const auto& [key, value] : j.items()) {
      if (key != "path" && key != "container" && key != "children" &&
          !kStrayKeys.contains(key)) {
        schema_error(ptr, "unknown key '" + key + "'");
      }
    }
    auto it = j.find("path");
    if (it == j.end()) schema_error(ptr, "missing required key 'path'");
    if (!it->is_string() || !valid_path(it->get<std::string>())) {
      schema_error(ptr + "/path", "slash-separated identifier path expected");
    }
    CaseFileItemDef def;
    def.path = it->get<std::string>();
    def.container = optional_bool(j, ptr, "container");
    def.parent = parent;
    def.stray = read_stray(j, ptr);
    if (parent) {
      const std::string& pp = model_.case_file[*parent].path;
      if (def.path.rfind(pp + "/", 0) != 0 ||
          def.path.find('/', pp.size() + 1) != std::string::npos) {
        schema_error(ptr + "/path", "child path must be '" + pp + "/<name>'");
      }
    } else if (def.path.find('/') != std::string::npos) {
      schema_error(ptr + "/path", "top-level case file items take a single segment");
    }
    claim_id(def.path, ptr);
    auto index = static_cast<std::uint32_t>(model_.case_file.size());
    model_.case_file.push_back(def);
    if (parent) model_.case_file[*parent].children.push_back(index);
    if (auto c = j.find("children"); c != j.end()) {
      require_array(*c, ptr + "/children");
      if (!c->empty() && !def.container) {
        schema_error(ptr + "/children", "only containers have children");
      }
      for (std::size_t i = 0; i < c->size(); ++i) {
        read_case_file_item((*c)[i], ptr + "/children/" + std::to_string(i), index);
      }
    }
  }

  void read_root(const json& j, const json& doc) {
    const std::string ptr = "/plan";
    require_object(j, ptr);
    for (const char* key : {"exitCriteria", "planningTable", "autoComplete"}) {
      if (j.contains(key)) {
        schema_error(ptr, std::string("'") + key +
                              "' of the case plan belongs at the top level");
      }
    }
    check_keys(j, ptr, {"id", "name", "kind", "children", "entryCriteria",
                        "collapsed", "manualActivation", "required",
                        "repetition"});
    if (auto k = j.find("kind"); k != j.end() && *k != "stage") {
      schema_error(ptr + "/kind", "the case plan is a stage");
    }
    PlanItemDefinition root;
    root.id = identifier(j, ptr, "id");
    root.name = optional_string(j, ptr, "name");
    root.kind = ItemKind::stage;
    root.collapsed = optional_bool(j, ptr, "collapsed");
    root.decorators.manual_activation = optional_bool(j, ptr, "manualActivation");
    root.decorators.required = optional_bool(j, ptr, "required");
    root.decorators.repetition = optional_bool(j, ptr, "repetition");
    root.decorators.auto_complete = optional_bool(doc, "", "autoComplete");
    claim_id(root.id, ptr);
    model_.items.push_back(root);

    read_criteria(j, ptr, "entryCriteria", 0, CriterionRole::entry);
    read_criteria(doc, "", "exitCriteria", 0, CriterionRole::exit);
    read_children(j, ptr, 0);
    if (auto t = doc.find("planningTable"); t != doc.end()) {
      auto table = read_table(*t, "/planningTable", 0);
      model_.items[0].planning_table = std::move(table);
    }
  }

  void read_criteria(const json& j, const std::string& ptr, const char* key,
                     ItemIndex owner, CriterionRole role) {
    auto it = j.find(key);
    if (it == j.end()) return;
    const std::string p = ptr + "/" + key;
    require_array(*it, p);
    for (std::size_t i = 0; i < it->size(); ++i) {
      SentryIndex s = read_sentry((*it)[i], p + "/" + std::to_string(i), owner, role);
      auto& item = model_.items[owner];
      (role == CriterionRole::entry ? item.entry_criteria : item.exit_criteria)
          .push_back(s);
    }
  }

  SentryIndex read_sentry(const json& j, const std::string& ptr, ItemIndex owner,
                          CriterionRole role) {
    require_object(j, ptr);
    check_keys(j, ptr, {"id", "on", "if"});
    Sentry s;
    s.id = identifier(j, ptr, "id");
    s.owner = owner;
    s.role = role;
    claim_id(s.id, ptr);
    if (auto on = j.find("on"); on != j.end()) {
      require_array(*on, ptr + "/on");
      for (std::size_t i = 0; i < on->size(); ++i) {
        const std::string p = ptr + "/on/" + std::to_string(i);
        const json& part = (*on)[i];
        require_object(part, p);
        check_keys(part, p, {"source", "event"});
        auto src = part.find("source");
        if (src == part.end() || !src->is_string()) {
          schema_error(p, "'source' string expected");
        }
        OnPart op;
        op.source = src->get<std::string>();
        if (auto ev = part.find("event"); ev != part.end()) {
          auto name = ev->is_string() ? event_name_from_string(ev->get<std::string>())
                                      : std::nullopt;
          if (!name || !is_standard_event(*name)) {
            schema_error(p + "/event", "standard event name expected");
          }
          op.event = *name;
        }
        s.on_parts.push_back(std::move(op));
        pending_.push_back({static_cast<SentryIndex>(model_.sentries.size()),
                            s.on_parts.size() - 1, p});
      }
    }
    if (auto cond = j.find("if"); cond != j.end()) {
      if (!cond->is_string()) schema_error(ptr + "/if", "expression string expected");
      s.if_part = cond->get<std::string>();
    }
    auto index = static_cast<SentryIndex>(model_.sentries.size());
    model_.sentries.push_back(std::move(s));
    return index;
  }

  void read_children(const json& j, const std::string& ptr, ItemIndex parent) {
    auto it = j.find("children");
    if (it == j.end()) return;
    const std::string p = ptr + "/children";
    require_array(*it, p);
    for (std::size_t i = 0; i < it->size(); ++i) {
      ItemIndex child = read_item((*it)[i], p + "/" + std::to_string(i), parent,
                                  false, std::nullopt);
      model_.items[parent].children.push_back(child);
    }
  }

  ItemIndex read_item(const json& j, const std::string& ptr, ItemIndex parent,
                      bool discretionary, std::optional<FragmentIndex> fragment) {
    require_object(j, ptr);
    check_keys(j, ptr, {"id", "name", "kind", "entryCriteria", "exitCriteria",
                        "autoComplete", "manualActivation", "required",
                        "repetition", "collapsed", "children", "planningTable",
                        "caseRef", "processKey", "duration"});
    PlanItemDefinition item;
    item.id = identifier(j, ptr, "id");
    item.name = optional_string(j, ptr, "name");
    auto kind_it = j.find("kind");
    auto kind = kind_it != j.end() && kind_it->is_string()
                    ? item_kind_from_string(kind_it->get<std::string>())
                    : std::nullopt;
    if (!kind) schema_error(ptr + "/kind", "plan item kind expected");
    item.kind = *kind;
    item.decorators.auto_complete = optional_bool(j, ptr, "autoComplete");
    item.decorators.manual_activation = optional_bool(j, ptr, "manualActivation");
    item.decorators.required = optional_bool(j, ptr, "required");
    item.decorators.repetition = optional_bool(j, ptr, "repetition");
    item.collapsed = optional_bool(j, ptr, "collapsed");
    item.discretionary = discretionary;
    item.parent = parent;
    item.fragment = fragment;

    auto only_for = [&](const char* key, ItemKind k) {
      if (j.contains(key) && item.kind != k) {
        schema_error(ptr + "/" + key, std::string("only valid for ") +
                                          std::string(to_string(k)));
      }
    };
    only_for("caseRef", ItemKind::case_task);
    only_for("processKey", ItemKind::process_task);
    only_for("duration", ItemKind::timer_listener);
    only_for("children", ItemKind::stage);
    item.case_ref = optional_string(j, ptr, "caseRef");
    item.process_key = optional_string(j, ptr, "processKey");
    if (auto d = j.find("duration"); d != j.end()) {
      if (!d->is_number_unsigned()) {
        schema_error(ptr + "/duration", "non-negative integer tick count expected");
      }
      item.duration = d->get<std::uint64_t>();
    }
    claim_id(item.id, ptr);

    auto index = static_cast<ItemIndex>(model_.items.size());
    model_.items.push_back(std::move(item));
    read_criteria(j, ptr, "entryCriteria", index, CriterionRole::entry);
    read_criteria(j, ptr, "exitCriteria", index, CriterionRole::exit);
    read_children(j, ptr, index);
    if (auto t = j.find("planningTable"); t != j.end()) {
      auto table = read_table(*t, ptr + "/planningTable", index);
      model_.items[index].planning_table = std::move(table);
    }
    return index;
  }

  PlanningTable read_table(const json& j, const std::string& ptr, ItemIndex owner) {
    require_object(j, ptr);
    check_keys(j, ptr, {"roles", "entries"});
    PlanningTable table;
    if (auto r = j.find("roles"); r != j.end()) {
      require_array(*r, ptr + "/roles");
      for (std::size_t i = 0; i < r->size(); ++i) {
        if (!(*r)[i].is_string()) {
          schema_error(ptr + "/roles/" + std::to_string(i), "role name expected");
        }
        table.authorized_roles.insert((*r)[i].get<std::string>());
      }
    }
    if (auto e = j.find("entries"); e != j.end()) {
      require_array(*e, ptr + "/entries");
      for (std::size_t i = 0; i < e->size(); ++i) {
        const std::string p = ptr + "/entries/" + std::to_string(i);
        const json& entry = (*e)[i];
        require_object(entry, p);
        if (entry.value("kind", "") == "plan_fragment") {
          table.entries.push_back(
              {PlanningEntry::Kind::fragment, read_fragment(entry, p, owner)});
        } else {
          table.entries.push_back(
              {PlanningEntry::Kind::item, read_item(entry, p, owner, true, std::nullopt)});
        }
      }
    }
    return table;
  }

  FragmentIndex read_fragment(const json& j, const std::string& ptr, ItemIndex owner) {
    for (const auto& [key, value] : j.items()) {
      if (key != "id" && key != "name" && key != "kind" && key != "items" &&
          !kStrayKeys.contains(key)) {
        schema_error(ptr, "unknown key '" + key + "'");
      }
    }
    PlanFragmentDef frag;
    frag.id = identifier(j, ptr, "id");
    frag.name = optional_string(j, ptr, "name");
    frag.stray = read_stray(j, ptr);
    frag.collapsed = frag.stray.collapsed;
    frag.stray.collapsed = false;
    claim_id(frag.id, ptr);
    auto index = static_cast<FragmentIndex>(model_.fragments.size());
    model_.fragments.push_back(frag);
    if (auto items = j.find("items"); items != j.end()) {
      require_array(*items, ptr + "/items");
      for (std::size_t i = 0; i < items->size(); ++i) {
        ItemIndex item = read_item((*items)[i], ptr + "/items/" + std::to_string(i),
                                   owner, true, index);
        model_.fragments[index].items.push_back(item);
      }
    }
    return index;
  }

  void resolve_on_parts() {
    for (const auto& p : pending_) {
      OnPart& part = model_.sentries[p.sentry].on_parts[p.part];
      if (model_.item_index(part.source)) {
        part.source_kind = SourceKind::element;
      } else if (model_.find_case_file_item(part.source)) {
        part.source_kind = SourceKind::case_file;
      } else if (model_.sentry_index(part.source)) {
        part.source_kind = SourceKind::criterion;
      } else {
        throw Error(ErrorCode::unresolved_reference,
                    p.ptr + ": unresolved onPart source '" + part.source + "'");
      }
      if (part.source_kind == SourceKind::criterion && part.event) {
        schema_error(p.ptr, "criterion onParts take no event");
      }
      if (part.source_kind != SourceKind::criterion && !part.event) {
        schema_error(p.ptr, "'event' required for element and case file sources");
      }
    }
  }

  struct PendingPart {
    SentryIndex sentry;
    std::size_t part;
    std::string ptr;
  };

  CaseModel model_;
  std::set<std::string> ids_;
  std::vector<PendingPart> pending_;
};

// Serialization ------------------------------------------------------------

using ojson = nlohmann::ordered_json;

ojson write_sentry(const Sentry& s) {
  ojson out;
  out["id"] = s.id;
  if (!s.on_parts.empty()) {
    ojson on = ojson::array();
    for (const auto& p : s.on_parts) {
      ojson part;
      part["source"] = p.source;
      if (p.event) part["event"] = to_string(*p.event);
      on.push_back(std::move(part));
    }
    out["on"] = std::move(on);
  }
  if (s.if_part) out["if"] = *s.if_part;
  return out;
}

void write_stray(ojson& out, const StrayAnnotations& s) {
  if (s.planning_table) out["planningTable"] = ojson::object();
  if (s.entry_criterion) out["entryCriteria"] = ojson::array({ojson::object()});
  if (s.exit_criterion) out["exitCriteria"] = ojson::array({ojson::object()});
  if (s.auto_complete) out["autoComplete"] = true;
  if (s.collapsed) out["collapsed"] = true;
  if (s.manual_activation) out["manualActivation"] = true;
  if (s.repetition) out["repetition"] = true;
  if (s.required) out["required"] = true;
}

class Writer {
 public:
  explicit Writer(const CaseModel& m) : m_(m) {}

  ojson write() {
    ojson doc;
    doc["id"] = m_.id;
    doc["name"] = m_.name;
    if (!m_.roles.empty()) {
      ojson roles = ojson::array();
      for (const auto& r : m_.roles) {
        ojson perms = ojson::array();
        for (auto p : r.permissions) perms.push_back(to_string(p));
        roles.push_back({{"name", r.name}, {"permissions", perms}});
      }
      doc["roles"] = std::move(roles);
    }
    ojson file = ojson::array();
    for (std::uint32_t i = 0; i < m_.case_file.size(); ++i) {
      if (!m_.case_file[i].parent) file.push_back(case_file_item(i));
    }
    if (!file.empty()) doc["caseFile"] = std::move(file);

    const auto& root = m_.plan();
    ojson plan;
    plan["id"] = root.id;
    plan["name"] = root.name;
    criteria(plan, "entryCriteria", root.entry_criteria);
    if (root.collapsed) plan["collapsed"] = true;
    if (root.decorators.manual_activation) plan["manualActivation"] = true;
    if (root.decorators.required) plan["required"] = true;
    if (root.decorators.repetition) plan["repetition"] = true;
    children(plan, root);
    doc["plan"] = std::move(plan);
    criteria(doc, "exitCriteria", root.exit_criteria);
    if (root.planning_table) doc["planningTable"] = table(*root.planning_table);
    if (root.decorators.auto_complete) doc["autoComplete"] = true;
    return doc;
  }

 private:
  ojson case_file_item(std::uint32_t index) {
    const auto& d = m_.case_file[index];
    ojson out;
    out["path"] = d.path;
    if (d.container) out["container"] = true;
    write_stray(out, d.stray);
    if (!d.children.empty()) {
      ojson kids = ojson::array();
      for (auto c : d.children) kids.push_back(case_file_item(c));
      out["children"] = std::move(kids);
    }
    return out;
  }

  void criteria(ojson& out, const char* key, const std::vector<SentryIndex>& list) {
    if (list.empty()) return;
    ojson arr = ojson::array();
    for (auto s : list) arr.push_back(write_sentry(m_.sentries[s]));
    out[key] = std::move(arr);
  }

  void children(ojson& out, const PlanItemDefinition& item) {
    if (item.children.empty()) return;
    ojson arr = ojson::array();
    for (auto c : item.children) arr.push_back(this->item(m_.items[c]));
    out["children"] = std::move(arr);
  }

  ojson item(const PlanItemDefinition& d) {
    ojson out;
    out["id"] = d.id;
    out["name"] = d.name;
    out["kind"] = to_string(d.kind);
    criteria(out, "entryCriteria", d.entry_criteria);
    criteria(out, "exitCriteria", d.exit_criteria);
    if (d.decorators.auto_complete) out["autoComplete"] = true;
    if (d.decorators.manual_activation) out["manualActivation"] = true;
    if (d.decorators.required) out["required"] = true;
    if (d.decorators.repetition) out["repetition"] = true;
    if (d.collapsed) out["collapsed"] = true;
    if (!d.case_ref.empty()) out["caseRef"] = d.case_ref;
    if (!d.process_key.empty()) out["processKey"] = d.process_key;
    if (d.kind == ItemKind::timer_listener) out["duration"] = d.duration;
    children(out, d);
    if (d.planning_table) out["planningTable"] = table(*d.planning_table);
    return out;
  }

  ojson table(const PlanningTable& t) {
    ojson out;
    if (!t.authorized_roles.empty()) out["roles"] = t.authorized_roles;
    ojson entries = ojson::array();
    for (const auto& e : t.entries) {
      if (e.kind == PlanningEntry::Kind::item) {
        entries.push_back(item(m_.items[e.index]));
      } else {
        const auto& f = m_.fragments[e.index];
        ojson frag;
        frag["id"] = f.id;
        frag["name"] = f.name;
        frag["kind"] = "plan_fragment";
        if (f.collapsed) frag["collapsed"] = true;
        write_stray(frag, f.stray);
        ojson items = ojson::array();
        for (auto i : f.items) items.push_back(item(m_.items[i]));
        frag["items"] = std::move(items);
        entries.push_back(std::move(frag));
      }
    }
    out["entries"] = std::move(entries);
    return out;
  }

  const CaseModel& m_;
};

}  // namespace

CaseModel parse_model_document(const nlohmann::json& document) {
  return Reader().read(document);
}

CaseModel parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(ErrorCode::syntax_error, "malformed model JSON", e.byte);
  }
  return parse_model_document(doc);
}

nlohmann::ordered_json serialize_model(const CaseModel& model) {
  return Writer(model).write();
}

std::shared_ptr<const CaseModel> load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read model file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  return std::make_shared<const CaseModel>(parse_model(std::string_view(text)));
}

}  // namespace casewright
