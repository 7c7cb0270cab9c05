#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>
#include <optional>
#include <sstream>

#include "wbstab/errors.hpp"
#include "wbstab/model.hpp"
#include "wbstab/qp.hpp"
#include "wbstab/rbd.hpp"
#include "wbstab/runner.hpp"

namespace py = pybind11;
using namespace wbstab;

namespace {

py::dict summary_dict(const runner::RunSummary& s) {
  py::dict d;
  d["name"] = s.name;
  d["outcome"] = runner::to_string(s.outcome);
  d["max_com_error"] = s.max_com_error;
  d["rms_force_error"] = s.rms_force_error;
  d["max_base_tilt"] = s.max_base_tilt;
  d["mean_solve_time_us"] = s.mean_solve_time_us;
  d["ticks"] = s.ticks;
  d["end_time"] = s.end_time;
  d["controller_errors"] = s.controller_errors;
  d["qp_errors"] = s.qp_errors;
  d["first_error"] = s.first_error;
  d["max_kkt_residual"] = s.max_kkt_residual;
  d["max_equality_residual"] = s.max_equality_residual;
  d["max_cone_violation"] = s.max_cone_violation;
  d["force_settle_time"] = s.force_settle_time;
  d["event_recovery_time"] = s.event_recovery_time;
  d["final_force_error"] = s.final_force_error;
  return d;
}

VecX or_empty(const std::optional<VecX>& v) { return v ? *v : VecX(); }

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Whole-body force-feedback stabilizer: dynamics, QP and closed-loop scenarios";

  auto base_err = py::register_exception<Error>(mod, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(mod, "ValidationError", base_err.ptr());
  py::register_exception<ParseError>(mod, "ParseError", base_err.ptr());
  py::register_exception<InfeasibleError>(mod, "InfeasibleError", base_err.ptr());

  py::class_<model::RobotModel>(mod, "RobotModel")
      .def_property_readonly("total_mass", &model::RobotModel::total_mass)
      .def_property_readonly("num_actuated", &model::RobotModel::num_actuated)
      .def_property_readonly("num_velocities", &model::RobotModel::num_velocities)
      .def_property_readonly("joint_names",
                             [](const model::RobotModel& m) {
                               std::vector<std::string> out;
                               for (int i = 0; i < m.num_actuated(); ++i) out.push_back(m.actuated_joint(i).name);
                               return out;
                             })
      .def_property_readonly("contact_names",
                             [](const model::RobotModel& m) {
                               std::vector<std::string> out;
                               for (const auto& c : m.contacts()) out.push_back(c.name);
                               return out;
                             })
      .def_property_readonly("lower_limits", &model::RobotModel::lower_limits)
      .def_property_readonly("upper_limits", &model::RobotModel::upper_limits)
      .def("serialize", [](const model::RobotModel& m) { return model::serialize(m); });

  mod.def("builtin_biped", &model::builtin_biped);
  mod.def("load_model", [](const std::string& text) { return model::load_model(text); }, py::arg("text"));
  mod.def("resolve_model", &model::resolve_model, py::arg("spec"));

  py::class_<model::Configuration>(mod, "Configuration")
      .def_static("zero", &model::Configuration::zero)
      .def_property(
          "base_position", [](const model::Configuration& q) { return q.base_pose.translation; },
          [](model::Configuration& q, const Vec3& p) { q.base_pose.translation = p; })
      .def_property(
          "base_rotation", [](const model::Configuration& q) { return q.base_pose.rotation; },
          [](model::Configuration& q, const Mat3& r) { q.base_pose.rotation = r; })
      .def_readwrite("joints", &model::Configuration::joints)
      .def_readwrite("joint_rates", &model::Configuration::joint_rates)
      .def_property("velocity", &model::Configuration::velocity, &model::Configuration::set_velocity);

  mod.def("default_stance", &model::biped_default_stance, py::arg("model"), py::arg("sole_height") = 0.0);

  mod.def("mass_matrix", &rbd::mass_matrix);
  mod.def("bias_forces", [](const model::RobotModel& m, const model::Configuration& q) { return rbd::bias_forces(m, q); });
  mod.def("com_position", &rbd::com_position);
  mod.def("frame_jacobian", &rbd::frame_jacobian);
  mod.def("forward_dynamics",
          [](const model::RobotModel& m, const model::Configuration& q, const VecX& tau) {
            return rbd::forward_dynamics(m, q, tau, {});
          });

  mod.def(
      "solve_qp",
      [](const MatX& P, const VecX& g, std::optional<MatX> A, std::optional<VecX> b, std::optional<MatX> C,
         std::optional<VecX> d, std::optional<VecX> lower, std::optional<VecX> upper) {
        const int n = static_cast<int>(g.size());
        qp::QpProblem p;
        p.P = P;
        p.g = g;
        p.A = A ? *A : MatX(0, n);
        p.b = or_empty(b);
        p.C = C ? *C : MatX(0, n);
        p.d = or_empty(d);
        p.lower = lower ? *lower : VecX::Constant(n, -std::numeric_limits<double>::infinity());
        p.upper = upper ? *upper : VecX::Constant(n, std::numeric_limits<double>::infinity());
        const qp::QpSolution s = qp::solve(p);
        py::dict out;
        out["x"] = s.x;
        out["status"] = qp::to_string(s.status);
        out["kkt_residual"] = s.kkt_residual;
        out["iterations"] = s.iterations;
        out["objective"] = s.objective;
        out["active_set"] = s.active_set;
        return out;
      },
      "minimize 1/2 x'Px + g'x  s.t.  Ax = b, Cx <= d, lower <= x <= upper", py::arg("P"), py::arg("g"),
      py::arg("A") = py::none(), py::arg("b") = py::none(), py::arg("C") = py::none(), py::arg("d") = py::none(),
      py::arg("lower") = py::none(), py::arg("upper") = py::none());

  py::class_<runner::ScenarioConfig>(mod, "ScenarioConfig")
      .def(py::init<>())
      .def("set", &runner::ScenarioConfig::set, py::arg("key"), py::arg("value"))
      .def("check", &runner::ScenarioConfig::check)
      .def("serialize", &runner::ScenarioConfig::serialize)
      .def("__str__", &runner::ScenarioConfig::serialize);

  mod.def("parse_config", &runner::parse_config, py::arg("text"));
  mod.def("load_config", &runner::load_config, py::arg("path"));

  mod.def(
      "run",
      [](const runner::ScenarioConfig& cfg, bool csv) {
        std::ostringstream os;
        runner::RunSummary s;
        {
          py::gil_scoped_release release;
          s = runner::run(cfg, {csv ? &os : nullptr, ""});
        }
        return py::make_tuple(summary_dict(s), csv ? py::object(py::str(os.str())) : py::object(py::none()));
      },
      "Runs one closed-loop scenario. Returns (summary, csv or None).", py::arg("config"), py::arg("csv") = false);

  mod.def(
      "sweep",
      [](const runner::ScenarioConfig& base, const std::string& param, const std::vector<std::string>& values,
         unsigned workers) {
        std::vector<runner::RunSummary> out;
        {
          py::gil_scoped_release release;
          out = runner::sweep(base, param, values, workers);
        }
        py::list l;
        for (const auto& s : out) l.append(summary_dict(s));
        return l;
      },
      py::arg("config"), py::arg("param"), py::arg("values"), py::arg("workers") = 0);

  mod.def("validate_csv", &runner::validate_csv, py::arg("text"));
}
