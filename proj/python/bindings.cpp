// Python bindings for the arena core. The surface is deliberately small:
// scoring helpers, camera projection, plan interpolation, config handling
// and whole-episode runs that hand back JSON text.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <tuple>

#include "arena/config.hpp"
#include "arena/errors.hpp"
#include "arena/eval.hpp"
#include "arena/geometry.hpp"
#include "arena/layout.hpp"
#include "arena/orchestrator.hpp"
#include "arena/traffic.hpp"

namespace py = pybind11;
using namespace arena;

namespace {

using PoseTuple = std::tuple<double, double, double>;

CameraModel camera_from(const Mat3& K, const Mat3& R, const std::array<double, 3>& T) {
  CameraModel cam;
  cam.name = "python";
  cam.K = K;
  cam.R = R;
  cam.T = {T[0], T[1], T[2]};
  cam.validate();
  return cam;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Closed-loop driving simulation core";
  m.attr("__version__") = ARENA_VERSION;

  auto base = py::register_exception<ArenaError>(m, "ArenaError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<UnreachableError>(m, "UnreachableError", base.ptr());

  m.def("ads", &ads, py::arg("route_completion"), py::arg("pdms"),
        "Driving score: route completion times the mean PDM score.");

  m.def(
      "pdms_frame",
      [](int nc, int dac, double ep, int ttc, int comfort, std::array<double, 3> weights) {
        return pdms_frame(nc, dac, ep, ttc, comfort,
                          ScoreWeights{weights[0], weights[1], weights[2]});
      },
      py::arg("nc"), py::arg("dac"), py::arg("ep"), py::arg("ttc"), py::arg("comfort"),
      py::arg("weights") = std::array<double, 3>{5.0, 5.0, 2.0},
      "Per-frame score; weights are (progress, ttc, comfort).");

  m.def(
      "fourier_embed",
      [](const std::vector<double>& values, int bands) { return fourier_embed(values, bands); },
      py::arg("values"), py::arg("bands") = kDefaultBands);

  m.def(
      "project_point",
      [](std::array<double, 3> p, const Mat3& K, const Mat3& R,
         std::array<double, 3> T) -> std::optional<std::pair<double, double>> {
        const auto px = project_point({p[0], p[1], p[2]}, camera_from(K, R, T));
        if (!px) return std::nullopt;
        return std::make_pair(px->x, px->y);
      },
      py::arg("point"), py::arg("K"), py::arg("R"), py::arg("T"),
      "Pixel of an ego-frame point, or None when it lies behind the near plane.");

  m.def(
      "sat_separation",
      [](std::array<double, 5> a, std::array<double, 5> b) {
        const auto box = [](const std::array<double, 5>& v) {
          return OrientedBox{{v[0], v[1]}, v[2], v[3], v[4]};
        };
        return sat_separation(box(a), box(b));
      },
      py::arg("a"), py::arg("b"),
      "Boxes are (x, y, yaw, length, width); negative means overlap.");

  m.def(
      "interpolate",
      [](const std::vector<PoseTuple>& waypoints, PoseTuple pose) {
        if (waypoints.size() != 6) throw ValidationError("waypoints", "expected 6 waypoints");
        AgentPlan plan;
        for (std::size_t k = 0; k < 6; ++k) {
          const auto& [x, y, yaw] = waypoints[k];
          plan.waypoints[k] = {x, y, yaw};
        }
        const auto& [px, py_, pyaw] = pose;
        std::vector<PoseTuple> out;
        for (const Pose2& s : interpolate_agent_plan(plan, {px, py_, pyaw})) {
          out.emplace_back(s.x, s.y, s.yaw);
        }
        return out;
      },
      py::arg("waypoints"), py::arg("pose") = PoseTuple{0.0, 0.0, 0.0},
      "Expands six waypoints into the 31-sample 10 Hz trajectory.");

  m.def("default_config", [] { return config_to_json(SimulationConfig{}); });
  m.def(
      "validate_config",
      [](const std::string& text) {
        const SimulationConfig cfg = parse_config(text);
        cfg.validate();
        return config_to_json(cfg);
      },
      py::arg("text"), "Parses and validates a config, returning its canonical JSON.");
  m.def(
      "config_hash", [](const std::string& text) { return config_hash(parse_config(text)); },
      py::arg("text"));

  m.def(
      "run_episode",
      [](const std::string& config_text) {
        const SimulationConfig cfg = parse_config(config_text);
        cfg.validate();
        EpisodeResult result;
        {
          py::gil_scoped_release release;
          result = cfg.mode == EgoMode::kOpenLoop ? run_open_loop(cfg) : run_episode(cfg);
        }
        py::dict out;
        out["episode_id"] = result.episode_id;
        out["report"] = report_json(result.report);
        out["log"] = result.log_text;
        out["exit_code"] = exit_code(result.report.termination.kind);
        return out;
      },
      py::arg("config"),
      "Runs one episode; returns the report JSON, the episode log and the exit code.");
}
