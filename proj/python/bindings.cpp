#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <memory>
#include <optional>

#include "casewright/error.hpp"
#include "casewright/instance.hpp"
#include "casewright/lifecycle.hpp"
#include "casewright/model_json.hpp"
#include "casewright/persistence.hpp"
#include "casewright/runtime.hpp"
#include "casewright/scenario.hpp"
#include "casewright/validate.hpp"

namespace py = pybind11;
using namespace casewright;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python side decodes it. The codec
// handles are leaked so nothing is released after interpreter shutdown.
py::object to_py(const json& j) {
  static py::handle loads = py::object(py::module_::import("json").attr("loads")).release();
  return loads(j.dump());
}

json from_py(const py::object& o) {
  if (o.is_none()) return nullptr;
  static py::handle dumps = py::object(py::module_::import("json").attr("dumps")).release();
  return json::parse(dumps(o).cast<std::string>());
}

py::list events_to_py(const std::vector<Event>& events) {
  py::list out;
  for (const auto& e : events) out.append(to_py(e.to_json()));
  return out;
}

using Roles = std::optional<std::vector<std::string>>;

// Without explicit roles the actor holds every role the model declares.
Actor make_actor(const CaseModel& model, const std::string& worker, const Roles& roles) {
  Actor a{worker, {}};
  if (roles) {
    a.roles.insert(roles->begin(), roles->end());
  } else {
    for (const auto& r : model.roles) a.roles.insert(r.name);
  }
  return a;
}

LifecycleKind kind_arg(const std::string& s) {
  auto k = lifecycle_kind_from_string(s);
  if (!k) throw Error(ErrorCode::invalid_argument, "unknown lifecycle kind: " + s);
  return *k;
}

LifecycleState state_arg(const std::string& s) {
  auto k = lifecycle_state_from_string(s);
  if (!k) throw Error(ErrorCode::invalid_argument, "unknown state: " + s);
  return *k;
}

EventName event_arg(const std::string& s) {
  auto k = event_name_from_string(s);
  if (!k) throw Error(ErrorCode::invalid_argument, "unknown event: " + s);
  return *k;
}

std::shared_ptr<const CaseModel> model_arg(const std::string& text) {
  return std::make_shared<const CaseModel>(parse_model(text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "casewright engine bindings";

  // Owned for the life of the interpreter.
  static PyObject* error_type =
      py::exception<Error>(m, "CasewrightError", PyExc_RuntimeError).release().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      // args are (code, message) so callers can branch on the code.
      py::handle type(error_type);
      py::object exc = type(py::str(std::string(to_string(e.code()))), py::str(e.what()));
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def("lifecycle_table", [] { return to_py(TransitionTable::standard().to_json()); });
  m.def(
      "apply_transition",
      [](const std::string& kind, const std::string& from, const std::string& event) {
        return std::string(to_string(apply_transition(kind_arg(kind), state_arg(from),
                                                      event_arg(event))));
      },
      py::arg("kind"), py::arg("state"), py::arg("event"));

  m.def("canonical_model", [](const std::string& text) {
    return serialize_model(parse_model(text)).dump();
  });
  m.def("validate", [](const std::string& text) {
    py::list out;
    for (const auto& d : validate_model(parse_model(text))) out.append(to_py(d.to_json()));
    return out;
  });

  m.def(
      "run_scenario",
      [](const std::string& model_path, const std::string& scenario_path,
         std::uint64_t snapshot_every) {
        ScenarioOptions opts;
        opts.snapshot_every = snapshot_every;
        ScenarioResult r = run_scenario_files(model_path, scenario_path, opts);
        py::dict out;
        out["exit_code"] = r.exit_code();
        out["line"] = r.line;
        out["message"] = r.message;
        out["transcript"] = r.transcript;
        out["snapshot"] = r.final_snapshot;
        return out;
      },
      py::arg("model_path"), py::arg("scenario_path"), py::arg("snapshot_every") = 0);

  py::class_<CaseInstance>(m, "Instance")
      .def(py::init([](const std::string& model_text, const std::string& id) {
             return CaseInstance::create(model_arg(model_text), id);
           }),
           py::arg("model"), py::arg("id") = "case-1")
      .def_property_readonly("id", &CaseInstance::id)
      .def_property_readonly("state",
                             [](const CaseInstance& c) { return std::string(to_string(c.case_state())); })
      .def_property_readonly("last_seq", &CaseInstance::last_seq)
      .def(
          "action",
          [](CaseInstance& c, const std::string& target, const std::string& action,
             const std::string& worker, const Roles& roles,
             const py::object& payload) {
            return events_to_py(c.worker_action(make_actor(c.model(), worker, roles), target, action,
                                                from_py(payload)));
          },
          py::arg("target"), py::arg("action"), py::arg("worker") = "worker",
          py::arg("roles") = py::none(), py::arg("payload") = py::none())
      .def(
          "case_file",
          [](CaseInstance& c, const std::string& op, const std::string& path,
             const py::object& payload, const std::string& worker,
             const Roles& roles) {
            return events_to_py(c.case_file_op(make_actor(c.model(), worker, roles), op, path,
                                               from_py(payload)));
          },
          py::arg("op"), py::arg("path"), py::arg("payload") = py::none(),
          py::arg("worker") = "worker", py::arg("roles") = py::none())
      .def(
          "plan",
          [](CaseInstance& c, const std::string& scope, const std::string& entry,
             const std::string& worker, const Roles& roles) {
            return events_to_py(c.plan(make_actor(c.model(), worker, roles), scope, entry));
          },
          py::arg("scope"), py::arg("entry"), py::arg("worker") = "worker",
          py::arg("roles") = py::none())
      .def("advance_clock",
           [](CaseInstance& c, std::uint64_t ticks) { return events_to_py(c.advance_clock(ticks)); })
      .def(
          "query",
          [](const CaseInstance& c, const std::string& view) { return to_py(c.query(view)); },
          py::arg("view") = "summary")
      .def("item_state",
           [](const CaseInstance& c, const std::string& id) -> py::object {
             const ItemInstance* it = c.find(id);
             if (it == nullptr) return py::none();
             return py::str(std::string(to_string(it->state)));
           })
      .def("log", [](const CaseInstance& c) { return events_to_py(c.log()); })
      .def("snapshot", &CaseInstance::canonical_snapshot);

  py::class_<Runtime>(m, "Runtime")
      .def(py::init([](const std::string& store, std::uint64_t snapshot_every) {
             return std::make_unique<Runtime>(std::make_shared<Store>(store),
                                              RuntimeOptions{snapshot_every});
           }),
           py::arg("store"), py::arg("snapshot_every") = 0)
      .def("register_model",
           py::overload_cast<const std::string&>(&Runtime::register_model))
      .def("create_instance", &Runtime::create_instance, py::arg("model"),
           py::arg("id") = py::none())
      .def("instance_ids", &Runtime::instance_ids)
      .def(
          "action",
          [](Runtime& r, const std::string& id, const std::string& target,
             const std::string& action, const std::string& worker,
             const Roles& roles, const py::object& payload) {
            return events_to_py(
                r.worker_action(id, make_actor(*r.instance(id).model_ptr(), worker, roles), target, action, from_py(payload)));
          },
          py::arg("instance"), py::arg("target"), py::arg("action"),
          py::arg("worker") = "worker", py::arg("roles") = py::none(),
          py::arg("payload") = py::none())
      .def(
          "case_file",
          [](Runtime& r, const std::string& id, const std::string& op, const std::string& path,
             const py::object& payload, const std::string& worker,
             const Roles& roles) {
            return events_to_py(
                r.case_file_op(id, make_actor(*r.instance(id).model_ptr(), worker, roles), op, path, from_py(payload)));
          },
          py::arg("instance"), py::arg("op"), py::arg("path"), py::arg("payload") = py::none(),
          py::arg("worker") = "worker", py::arg("roles") = py::none())
      .def(
          "plan",
          [](Runtime& r, const std::string& id, const std::string& scope, const std::string& entry,
             const std::string& worker, const Roles& roles) {
            return events_to_py(r.plan(id, make_actor(*r.instance(id).model_ptr(), worker, roles), scope, entry));
          },
          py::arg("instance"), py::arg("scope"), py::arg("entry"), py::arg("worker") = "worker",
          py::arg("roles") = py::none())
      .def("advance_clock",
           [](Runtime& r, const std::string& id, std::uint64_t ticks) {
             return events_to_py(r.advance_clock(id, ticks));
           })
      .def(
          "query",
          [](Runtime& r, const std::string& id, const std::string& view) {
            return to_py(r.query(id, view));
          },
          py::arg("instance"), py::arg("view") = "summary")
      .def("snapshot",
           [](Runtime& r, const std::string& id) { return r.instance(id).canonical_snapshot(); })
      .def("restored_snapshot",
           [](Runtime& r, const std::string& id) {
             return r.store().restore(id).canonical_snapshot();
           })
      .def("evict_all", &Runtime::evict_all);
}
