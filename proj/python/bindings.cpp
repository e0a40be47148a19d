#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qstopwatch/chain.hpp"
#include "qstopwatch/cli_io.hpp"
#include "qstopwatch/conditional.hpp"
#include "qstopwatch/distribution.hpp"
#include "qstopwatch/errors.hpp"
#include "qstopwatch/scenarios.hpp"

namespace py = pybind11;
using namespace qstopwatch;

namespace {

struct Model {
  HermitianOperator h;
  Projector pi;
  QuantumState psi0;
};

Model model(const Matrix &h, const Matrix &pi, const Vector &psi0) {
  return {HermitianOperator(h), Projector(pi), QuantumState(psi0)};
}

py::dict chain_dict(const ChainResult &r) {
  py::dict d;
  d["dt"] = r.dt;
  d["times"] = r.times;
  d["p_cond"] = r.p_cond;
  d["p_exact"] = r.p_exact;
  d["survival"] = r.survival;
  d["terminated_early"] = r.terminated_early;
  d["total"] = r.total();
  return d;
}

py::dict distribution_dict(const DetectionDistribution &dd) {
  py::dict d;
  d["dt"] = dd.dt;
  d["times"] = dd.times;
  d["w"] = dd.w;
  d["u"] = dd.u;
  d["density"] = dd.density;
  d["survival"] = dd.survival;
  d["total"] = dd.total;
  d["tail"] = dd.tail;
  d["integrated_total"] = dd.integrated_total;
  d["has_capped_region"] = dd.has_capped_region;
  const MeanDetectionTime m = mean_detection_time(dd);
  d["mean"] = m.mean;
  d["conditional_mean"] = m.conditional_mean ? py::cast(*m.conditional_mean) : py::none();
  return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Detection-time statistics under repeated projective measurement";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<GridError>(m, "GridError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<AnnihilatedState>(m, "AnnihilatedState", base.ptr());
  py::register_exception<ContaminationError>(m, "ContaminationError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def(
      "run_chain",
      [](const Matrix &h, const Matrix &pi, const Vector &psi0, double dt, std::size_t steps,
         double survival_floor) {
        const Model md = model(h, pi, psi0);
        return chain_dict(run_chain(md.h, md.pi, md.psi0, dt, steps, ChainOptions{survival_floor, {}}));
      },
      py::arg("h"), py::arg("pi"), py::arg("psi0"), py::arg("dt"), py::arg("steps"),
      py::arg("survival_floor") = 1e-12);

  m.def(
      "hazard_series",
      [](const Matrix &h, const Matrix &pi, const Vector &psi0, double dt, std::size_t steps) {
        const Model md = model(h, pi, psi0);
        const HazardSeries hs = ConditionalEvolution(md.h, md.pi, md.psi0, dt).hazard_series(steps);
        py::dict d;
        d["dt"] = hs.dt;
        d["times"] = hs.times;
        d["p"] = hs.p;
        d["w"] = hs.w;
        d["w_initial"] = hs.w_initial;
        return d;
      },
      py::arg("h"), py::arg("pi"), py::arg("psi0"), py::arg("dt"), py::arg("steps"));

  m.def(
      "detection_distribution",
      [](const Matrix &h, const Matrix &pi, const Vector &psi0, double dt, double t_max) {
        const Model md = model(h, pi, psi0);
        const auto steps = static_cast<std::size_t>(t_max / dt + 1e-9);
        const ConditionalEvolution ce(md.h, md.pi, md.psi0, dt);
        return distribution_dict(build_distribution(ce.hazard_series(steps), t_max));
      },
      py::arg("h"), py::arg("pi"), py::arg("psi0"), py::arg("dt"), py::arg("t_max"));

  m.def(
      "distribution_from_hazard",
      [](double w_initial, const std::vector<double> &w, double dt, double t_max) {
        HazardSeries hs;
        hs.dt = dt;
        hs.w_initial = w_initial;
        hs.w = w;
        for (std::size_t k = 0; k < w.size(); ++k) {
          hs.times.push_back((k + 1) * dt);
          hs.p.push_back(w[k] * dt);
        }
        return distribution_dict(build_distribution(hs, t_max));
      },
      py::arg("w_initial"), py::arg("w"), py::arg("dt"), py::arg("t_max"));

  m.def(
      "zeno_sweep",
      [](const Matrix &h, const Matrix &pi, const Vector &psi0, const std::vector<double> &dts) {
        const Model md = model(h, pi, psi0);
        const ZenoSweep z = zeno_sweep(md.h, md.pi, md.psi0, dts);
        py::dict d;
        std::vector<double> dt, p;
        for (const ZenoPoint &pt : z.points) {
          dt.push_back(pt.dt);
          p.push_back(pt.p_first_step);
        }
        d["dt"] = dt;
        d["p_first_step"] = p;
        d["slope"] = z.slope;
        d["coefficient"] = z.coefficient;
        d["extrapolated_coefficient"] = z.extrapolated_coefficient;
        d["degenerate"] = z.degenerate;
        return d;
      },
      py::arg("h"), py::arg("pi"), py::arg("psi0"), py::arg("dts"));

  m.def(
      "branch_weights",
      [](const Matrix &h, const Matrix &pi, const Vector &psi0, double dt, std::size_t k_max) {
        const Model md = model(h, pi, psi0);
        const BranchLedger ledger = branch_ledger(md.h, md.pi, md.psi0, dt, k_max);
        std::vector<std::vector<double>> rows;
        for (const auto &step : ledger.steps) {
          std::vector<double> row;
          for (const Branch &b : step)
            row.push_back(b.weight);
          rows.push_back(std::move(row));
        }
        return rows;
      },
      py::arg("h"), py::arg("pi"), py::arg("psi0"), py::arg("dt"), py::arg("k_max"),
      "Row k-1 holds the weights at t_k: detections at t_1..t_k, then the undetected branch.");

  m.def(
      "scenario_matrices",
      [](const std::string &config_text) {
        const RunConfig cfg = parse_config(config_text);
        if (cfg.scenario.kind == ScenarioKind::tunneling_1d)
          throw ValidationError("scenario_matrices: tunneling has two stages; use run_config");
        const Scenario s = build_scenario(cfg.scenario);
        py::dict d;
        d["name"] = s.name;
        d["h"] = s.hamiltonian.matrix();
        d["pi"] = s.detector.matrix();
        d["psi0"] = s.initial.amplitudes();
        d["dt"] = s.dt;
        d["warnings"] = s.warnings;
        return d;
      },
      py::arg("config_text"));

  m.def(
      "run_config",
      [](const std::string &config_text) {
        const RunResult r = run(parse_config(config_text));
        return py::make_tuple(render_report(r.report), render_csv(r));
      },
      py::arg("config_text"), "Returns (report_json, csv_text).");

  m.def(
      "sweep_dt",
      [](const std::string &config_text, const std::vector<double> &dts) {
        const SweepReport s = sweep_dt(parse_config(config_text), dts);
        return py::make_tuple(render_sweep_report(s), render_sweep_csv(s));
      },
      py::arg("config_text"), py::arg("dts"));
}
