#include "casewright/case_file.hpp"

#include <vector>

#include "casewright/error.hpp"

namespace casewright {

namespace {

const nlohmann::json& field(const nlohmann::json& payload, const char* key) {
  static const nlohmann::json null_value;
  if (payload.is_object()) {
    auto it = payload.find(key);
    if (it != payload.end()) return *it;
  }
  return null_value;
}

std::string reference_of(const nlohmann::json& payload) {
  const auto& ref = field(payload, "reference");
  if (!ref.is_string() || ref.get<std::string>().empty()) {
    throw Error(ErrorCode::invalid_argument,
                "reference operations need a non-empty \"reference\" string");
  }
  return ref.get<std::string>();
}

}  // namespace

std::string parent_path(std::string_view path) {
  auto pos = path.rfind('/');
  if (pos == std::string_view::npos) return {};
  return std::string(path.substr(0, pos));
}

void CaseFileState::declare(const std::string& path, bool container) {
  auto& e = items_[path];
  e.container = container;
  e.declared = true;
}

const CaseFileEntry* CaseFileState::find(std::string_view path) const {
  auto it = items_.find(path);
  return it == items_.end() ? nullptr : &it->second;
}

bool CaseFileState::exists(std::string_view path) const {
  const auto* e = find(path);
  return e != nullptr && e->exists;
}

void CaseFileState::check(EventName op, const std::string& path,
                          const nlohmann::json& payload) const {
  if (!is_case_file_event(op)) {
    throw Error(ErrorCode::invalid_argument,
                std::string(to_string(op)) + " is not a case file operation");
  }
  if (op == EventName::addChild || op == EventName::removeChild) {
    const std::string container = parent_path(path);
    if (container.empty()) {
      throw Error(ErrorCode::invalid_argument,
                  std::string(to_string(op)) +
                      " takes a <container>/<child> path, got '" + path + "'");
    }
    const auto* c = find(container);
    if (c == nullptr || !c->exists) {
      throw Error(ErrorCode::no_such_path, "no such case file item: " + container);
    }
    if (!c->container) {
      throw Error(ErrorCode::not_a_container,
                  "case file item is not a container: " + container);
    }
    if (op == EventName::addChild) {
      if (exists(path)) {
        throw Error(ErrorCode::illegal_transition,
                    "child already exists: " + path);
      }
    } else if (!c->children.contains(path)) {
      throw Error(ErrorCode::no_such_path, "no such child: " + path);
    }
    return;
  }

  const auto* e = find(path);
  if (e == nullptr) {
    throw Error(ErrorCode::no_such_path, "no such case file item: " + path);
  }
  if (op == EventName::create) {
    const std::string parent = parent_path(path);
    if (!parent.empty() && e->declared && !exists(parent)) {
      throw Error(ErrorCode::no_such_path,
                  "parent of " + path + " does not exist: " + parent);
    }
  } else if (!e->exists) {
    throw Error(ErrorCode::no_such_path, "case file item does not exist: " + path);
  }
  apply_transition(lifecycle_kind(*e),
                   e->exists ? LifecycleState::available : LifecycleState::absent,
                   op);
  if (op == EventName::addReference) {
    reference_of(payload);
  } else if (op == EventName::removeReference) {
    if (!e->references.contains(reference_of(payload))) {
      throw Error(ErrorCode::invalid_argument,
                  "no such reference on " + path);
    }
  }
}

std::string CaseFileState::apply(EventName op, const std::string& path,
                                 const nlohmann::json& payload) {
  check(op, path, payload);

  if (op == EventName::addChild) {
    const std::string container = parent_path(path);
    auto& child = items_[path];
    child.exists = true;
    child.revision += 1;
    child.value = field(payload, "value");
    auto& c = items_.at(container);
    c.children.insert(path);
    c.revision += 1;
    return container;
  }
  if (op == EventName::removeChild) {
    const std::string container = parent_path(path);
    auto it = items_.find(path);
    if (it->second.declared) {
      it->second.exists = false;
      it->second.value = nullptr;
      it->second.revision += 1;
    } else {
      items_.erase(it);
    }
    auto& c = items_.at(container);
    c.children.erase(path);
    c.revision += 1;
    return container;
  }

  auto& e = items_.at(path);
  switch (op) {
    case EventName::create: {
      e.exists = true;
      e.value = field(payload, "value");
      const std::string parent = parent_path(path);
      if (!parent.empty()) {
        auto pit = items_.find(parent);
        if (pit != items_.end()) pit->second.children.insert(path);
      }
      break;
    }
    case EventName::replace:
      e.value = field(payload, "value");
      break;
    case EventName::update: {
      const auto& v = field(payload, "value");
      if (e.value.is_object() && v.is_object()) {
        e.value.merge_patch(v);
      } else {
        e.value = v;
      }
      break;
    }
    case EventName::delete_: {
      std::vector<std::string> stack(e.children.begin(), e.children.end());
      e.exists = false;
      e.value = nullptr;
      e.references.clear();
      e.children.clear();
      while (!stack.empty()) {
        std::string child = stack.back();
        stack.pop_back();
        auto cit = items_.find(child);
        if (cit == items_.end()) continue;
        for (const auto& g : cit->second.children) stack.push_back(g);
        if (cit->second.declared) {
          cit->second.exists = false;
          cit->second.value = nullptr;
          cit->second.children.clear();
          cit->second.references.clear();
          cit->second.revision += 1;
        } else {
          items_.erase(cit);
        }
      }
      const std::string parent = parent_path(path);
      if (!parent.empty()) {
        auto pit = items_.find(parent);
        if (pit != items_.end()) pit->second.children.erase(path);
      }
      break;
    }
    case EventName::addReference:
      e.references.insert(reference_of(payload));
      break;
    case EventName::removeReference:
      e.references.erase(reference_of(payload));
      break;
    default:
      break;
  }
  e.revision += 1;
  return path;
}

nlohmann::json CaseFileState::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [path, e] : items_) {
    out[path] = {
        {"exists", e.exists},
        {"container", e.container},
        {"declared", e.declared},
        {"children", e.children},
        {"references", e.references},
        {"revision", e.revision},
        {"value", e.value},
    };
  }
  return out;
}

CaseFileState CaseFileState::from_json(const nlohmann::json& j) {
  CaseFileState s;
  for (const auto& [path, e] : j.items()) {
    CaseFileEntry entry;
    entry.exists = e.at("exists").get<bool>();
    entry.container = e.at("container").get<bool>();
    entry.declared = e.at("declared").get<bool>();
    entry.children = e.at("children").get<std::set<std::string>>();
    entry.references = e.at("references").get<std::set<std::string>>();
    entry.revision = e.at("revision").get<std::uint64_t>();
    entry.value = e.at("value");
    s.items_.emplace(path, std::move(entry));
  }
  return s;
}

}  // namespace casewright
