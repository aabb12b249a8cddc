#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>
#include <string>

#include "artic/codec_model.hpp"
#include "artic/harness.hpp"
#include "artic/qa_pipeline.hpp"
#include "artic/recap_abr.hpp"
#include "artic/zeco_stream.hpp"

namespace py = pybind11;
using namespace artic;

namespace {

py::dict summary_dict(const harness::Summary& s) {
  py::dict d;
  d["frames"] = s.frames;
  d["lost_frames"] = s.lost_frames;
  d["mean_latency_ms"] = s.mean_latency_ms;
  d["p95_latency_ms"] = s.p95_latency_ms;
  d["qa_total"] = s.qa_total;
  d["qa_correct"] = s.qa_correct;
  d["accuracy"] = s.accuracy ? py::cast(*s.accuracy) : py::none();
  d["mean_bitrate_kbps"] = s.mean_bitrate_kbps;
  return d;
}

harness::ScenarioConfig make_config(const std::optional<std::string>& path,
                                    const std::map<std::string, std::string>& settings) {
  auto cfg = path ? harness::ScenarioConfig::load(*path) : harness::ScenarioConfig{};
  for (const auto& [k, v] : settings) cfg.set(k, v);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_artic, m) {
  m.doc() = "Bindings for the artic streaming simulator";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<InvariantError>(m, "InvariantError", PyExc_RuntimeError);

  m.def("version", [] { return std::string(harness::kVersion); });

  m.def(
      "next_bitrate",
      [](double last_rate, double estimate, std::optional<double> confidence, double tau,
         double gamma, double floor_kbps, double ceiling_kbps) {
        abr::ControllerConfig cfg;
        cfg.tau = tau;
        cfg.gamma = gamma;
        cfg.floor_kbps = floor_kbps;
        cfg.ceiling_kbps = ceiling_kbps;
        cfg.validate();
        std::optional<abr::ConfidenceSample> sample;
        if (confidence) sample = abr::ConfidenceSample{*confidence, 0.0, 0.0};
        return abr::next_bitrate(cfg, last_rate, estimate, sample, 0.0).rate_kbps;
      },
      py::arg("last_rate_kbps"), py::arg("estimate_kbps"), py::arg("confidence") = py::none(),
      py::arg("tau") = 0.8, py::arg("gamma") = 2.0, py::arg("floor_kbps") = 100.0,
      py::arg("ceiling_kbps") = 4000.0,
      "Next target bitrate; no confidence means tracking the estimate.");

  m.def(
      "importance_from_distance",
      [](double distance, int width, int height, double mu) {
        zeco::ZecoConfig cfg;
        cfg.mu = mu;
        cfg.validate();
        return zeco::importance_from_distance(cfg, width, height, distance);
      },
      py::arg("distance"), py::arg("width") = 1280, py::arg("height") = 720, py::arg("mu") = 0.5);

  m.def(
      "qp_from_importance",
      [](double rho, int q_min, int q_max) {
        zeco::ZecoConfig cfg;
        cfg.q_min = q_min;
        cfg.q_max = q_max;
        cfg.validate();
        return zeco::qp_from_importance(cfg, rho);
      },
      py::arg("rho"), py::arg("q_min") = 20, py::arg("q_max") = 51);

  m.def(
      "budget_bytes",
      [](double rate_kbps, double fps) {
        codec::FrameSpec spec;
        spec.fps = fps;
        return codec::budget_bytes(spec, rate_kbps);
      },
      py::arg("rate_kbps"), py::arg("fps") = 30.0);

  m.def(
      "pipeline_stats",
      [](std::size_t generated, std::size_t accepted, std::size_t verified) {
        const auto s = qa::stats_from_counts(generated, accepted, verified);
        py::dict d;
        d["filter_rate"] = s.filter_rate;
        d["verify_rate"] = s.verify_rate;
        d["overall_rate"] = s.overall_rate;
        d["empty"] = s.empty;
        return d;
      },
      py::arg("generated"), py::arg("accepted"), py::arg("verified"));

  m.def("scenario_keys", [] { return harness::ScenarioConfig::keys(); });

  m.def(
      "run_scenario",
      [](std::optional<std::string> path, std::map<std::string, std::string> settings,
         std::optional<std::string> out_dir) {
        const auto cfg = make_config(path, settings);
        harness::RunResult result;
        {
          py::gil_scoped_release release;
          result = harness::run(cfg);
          if (out_dir) harness::write_outputs(result, *out_dir);
        }
        py::dict d = summary_dict(result.summary);
        d["stack"] = result.stack;
        d["cc"] = result.cc;
        py::list latency, bitrate;
        for (const auto& f : result.frames) {
          latency.append(f.latency_ms ? py::cast(*f.latency_ms) : py::none());
          bitrate.append(f.bitrate_kbps);
        }
        d["latency_ms"] = latency;
        d["bitrate_kbps"] = bitrate;
        return d;
      },
      py::arg("path") = py::none(), py::arg("settings") = std::map<std::string, std::string>{},
      py::arg("out_dir") = py::none(),
      "Runs a scenario file and/or key=value overrides; returns the summary and per-frame series.");
}
