#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qstopwatch/cli_io.hpp"
#include "qstopwatch/conditional.hpp"

namespace qstopwatch {

namespace {

using ordered_json = nlohmann::ordered_json;

std::size_t grid_steps(double t_max, double dt) {
  return static_cast<std::size_t>(std::floor(t_max / dt + 1e-9));
}

bool wants(const RunConfig &cfg, CheckKind k) {
  return std::find(cfg.checks.begin(), cfg.checks.end(), k) != cfg.checks.end();
}

std::vector<std::size_t> spread(std::size_t count, std::size_t last) {
  std::vector<std::size_t> out;
  if (last == 0)
    return out;
  const std::size_t n = std::min(count, last);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k =
        n == 1 ? 1 : 1 + static_cast<std::size_t>(std::llround(
                             static_cast<double>(i) * static_cast<double>(last - 1) /
                             static_cast<double>(n - 1)));
    if (out.empty() || out.back() != k)
      out.push_back(k);
  }
  return out;
}

double edge_mass(const Vector &psi, const std::vector<Index> &sites) {
  double s = 0.0;
  for (Index j : sites)
    s += std::norm(psi[j]);
  return s;
}

void guard_edges(double probability, const std::string &engine) {
  if (probability > kEdgeProbabilityLimit) {
    std::ostringstream os;
    os << "lattice edge contamination: " << engine << " engine put conditional probability "
       << probability << " on the outer " << kEdgeFraction * 100
       << "% of the lattice (limit " << kEdgeProbabilityLimit
       << "); enlarge the lattice or shorten T_max";
    throw ContaminationError(os.str());
  }
}

CheckOutcome zeno_check(const Scenario &s, const std::vector<double> &dts) {
  CheckOutcome c;
  c.kind = CheckKind::zeno;
  const ZenoSweep z = zeno_sweep(s.hamiltonian, s.detector, s.initial, dts);
  c.metrics["slope"] = z.slope;
  c.metrics["coefficient"] = z.coefficient;
  c.metrics["extrapolated_coefficient"] = z.extrapolated_coefficient;
  c.metrics["dropped_points"] = static_cast<double>(z.dropped);
  if (z.degenerate) {
    c.value = z.slope;
    c.detail = "degenerate: the initial state does not couple to the detector at second order";
    return c;
  }
  const double rel = std::abs(z.extrapolated_coefficient - z.coefficient) / z.coefficient;
  c.metrics["coefficient_relative_error"] = rel;
  c.value = z.slope;
  c.passed = z.slope >= kZenoSlopeLow && z.slope <= kZenoSlopeHigh &&
             rel <= kZenoCoefficientTolerance;
  std::ostringstream os;
  os << "slope " << z.slope << " (need [" << kZenoSlopeLow << ", " << kZenoSlopeHigh
     << "]), coefficient error " << rel << " (need <= " << kZenoCoefficientTolerance << ")";
  c.detail = os.str();
  return c;
}

CheckOutcome povm_check(const ConditionalEvolution &ce, const DetectionDistribution &dd) {
  CheckOutcome c;
  c.kind = CheckKind::povm;
  const PovmSet povm(ce, dd);
  const Vector &psi = ce.initial_state().amplitudes();
  const double resolution = povm.resolution(psi);
  const double remainder = povm.remainder_expectation(psi);
  double min_eig = 0.0;
  for (std::size_t k : spread(kPovmEigenSamples, povm.size()))
    min_eig = std::min(min_eig, povm.min_effect_eigenvalue(k));
  const double bound = povm.effect_spectrum_bound();
  const double lowest = std::min(min_eig, bound);

  c.value = std::abs(resolution - 1.0);
  c.metrics["resolution"] = resolution;
  c.metrics["remainder_expectation"] = remainder;
  c.metrics["tail"] = dd.tail;
  c.metrics["min_sampled_effect_eigenvalue"] = min_eig;
  c.metrics["effect_spectrum_bound"] = bound;
  c.passed = c.value <= kPovmResolutionTolerance && lowest >= kPovmEigenvalueFloor &&
             remainder >= kPovmRemainderFloor;
  std::ostringstream os;
  os << "resolution deviation " << c.value << " (need <= " << kPovmResolutionTolerance
     << "), min effect eigenvalue " << lowest << " (need >= " << kPovmEigenvalueFloor
     << "), <Ebar> " << remainder << " (need >= " << kPovmRemainderFloor << ")";
  c.detail = os.str();
  return c;
}

CheckOutcome residual_check(const DetectionDistribution &dd) {
  CheckOutcome c;
  c.kind = CheckKind::residual;
  c.value = integral_equation_residual(dd);
  c.passed = c.value <= kResidualTolerance;
  std::ostringstream os;
  os << "normalized residual " << c.value << " (need <= " << kResidualTolerance << ")";
  c.detail = os.str();
  return c;
}

double cross_engine(const DetectionDistribution &dd, const ChainResult &chain) {
  const std::size_t k_max = dd.size() - 1;
  std::vector<double> approx(k_max), exact(k_max);
  std::vector<bool> mask(k_max);
  double before = 1.0;
  for (std::size_t k = 1; k <= k_max; ++k) {
    approx[k - 1] = dd.density[k];
    const bool ran = k - 1 < chain.size();
    exact[k - 1] = ran ? chain.p_exact[k - 1] / chain.dt : 0.0;
    mask[k - 1] = ran && before > kCrossEngineSurvivalFloor;
    if (ran)
      before = chain.survival[k - 1];
  }
  return relative_sup_norm(approx, exact, mask);
}

ordered_json optional_number(const std::optional<double> &v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json finite_or_null(double v) {
  return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
}

std::string dump(const ordered_json &j) { return j.dump(2) + "\n"; }

} // namespace

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double relative_sup_norm(const std::vector<double> &a, const std::vector<double> &b,
                         const std::vector<bool> &mask) {
  if (a.size() != b.size() || a.size() != mask.size())
    throw DimensionError("relative_sup_norm: length mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask[i])
      continue;
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  if (scale == 0.0)
    return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / scale;
}

bool RunReport::all_checks_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckOutcome &c) { return c.passed; });
}

RunResult run(const RunConfig &cfg) {
  const ScenarioSpec &spec = cfg.scenario;
  validate(spec);
  RunResult result;
  RunReport &rep = result.report;

  const bool need_approx = cfg.approx || wants(cfg, CheckKind::povm) ||
                           wants(cfg, CheckKind::residual) || wants(cfg, CheckKind::cross_engine);
  const bool need_exact = cfg.exact || wants(cfg, CheckKind::cross_engine);

  std::optional<Scenario> scenario;
  double t_max = spec.t_max;
  if (spec.kind == ScenarioKind::tunneling_1d) {
    const TunnelingPlan plan =
        build_tunneling_1d(std::get<TunnelingParams>(spec.parameters), spec.dt);
    ChainOptions options;
    options.watch_sites = plan.stage1().edge_sites;
    const std::size_t k1 = grid_steps(spec.t_max, spec.dt);
    TunnelingStage2 staged = prepare_stage2(plan, k1, options);
    guard_edges(staged.stage1.watch_max, "stage-1 exact");
    Stage1Summary s1;
    s1.steps = staged.stage1.size();
    s1.selected_step = staged.selected_step;
    s1.selected_time = static_cast<double>(staged.selected_step) * spec.dt;
    s1.total = staged.stage1.total();
    s1.final_survival = staged.stage1.final_survival();
    if (s1.total >= 1e-9)
      s1.conditional_mean = staged.stage1.mean_time() / s1.total;
    rep.stage1 = s1;
    scenario.emplace(std::move(staged.stage2));
    t_max = spec.t_max_stage2.value_or(spec.t_max);
  } else {
    scenario.emplace(build_scenario(spec));
  }
  const Scenario &s = *scenario;
  const std::size_t steps = grid_steps(t_max, spec.dt);

  rep.scenario = s.name;
  rep.kind = to_string(spec.kind);
  rep.dimension = static_cast<std::size_t>(s.hamiltonian.dimension());
  rep.dt = spec.dt;
  rep.t_max = t_max;
  rep.steps = steps;
  rep.warnings = s.warnings;

  std::optional<ConditionalEvolution> ce;
  double edge = 0.0;
  if (need_approx) {
    ce.emplace(s.hamiltonian, s.detector, s.initial, spec.dt);
    const HazardSeries hs = ce->hazard_series(steps);
    DetectionDistribution dd = build_distribution(hs, t_max);
    const MeanDetectionTime mean = mean_detection_time(dd);
    ApproxSummary a;
    a.total = dd.total;
    a.tail = dd.tail;
    a.integrated_total = dd.integrated_total;
    a.mean = mean.mean;
    a.conditional_mean = mean.conditional_mean;
    a.validity_epsilon = ce->max_validity_epsilon(steps);
    a.certain_within_horizon = dd.tail < kCertainTail;
    a.has_capped_region = dd.has_capped_region;
    if (a.validity_epsilon > cfg.validity_warn_threshold) {
      std::ostringstream os;
      os << "validity epsilon " << a.validity_epsilon << " exceeds " << cfg.validity_warn_threshold
         << "; the approximate density may deviate from the exact chain";
      rep.warnings.push_back(os.str());
    }
    if (!s.edge_sites.empty()) {
      for (std::size_t k : spread(kEdgeGuardSamples, steps))
        edge = std::max(edge, edge_mass(ce->conditional_state(k).amplitudes(), s.edge_sites));
      rep.edge_probability = edge;
      guard_edges(edge, "approximate");
    }
    rep.approx = a;
    result.approx = std::move(dd);
  }

  if (need_exact) {
    ChainOptions options;
    options.watch_sites = s.edge_sites;
    ChainResult chain = run_chain(s.hamiltonian, s.detector, s.initial, spec.dt, steps, options);
    if (!s.edge_sites.empty()) {
      edge = std::max(edge, chain.watch_max);
      rep.edge_probability = edge;
      guard_edges(chain.watch_max, "exact");
    }
    ExactSummary e;
    e.total = chain.total();
    e.final_survival = chain.final_survival();
    e.mean = chain.mean_time();
    if (e.total >= 1e-9)
      e.conditional_mean = e.mean / e.total;
    e.steps_run = chain.size();
    e.terminated_early = chain.terminated_early;
    rep.exact = e;
    result.exact = std::move(chain);
  }

  if (result.approx && result.exact)
    rep.cross_engine_deviation = cross_engine(*result.approx, *result.exact);

  for (CheckKind kind : cfg.checks) {
    switch (kind) {
    case CheckKind::zeno:
      rep.checks.push_back(zeno_check(s, cfg.zeno_dts));
      break;
    case CheckKind::povm:
      rep.checks.push_back(povm_check(*ce, *result.approx));
      break;
    case CheckKind::residual:
      rep.checks.push_back(residual_check(*result.approx));
      break;
    case CheckKind::cross_engine: {
      CheckOutcome c;
      c.kind = CheckKind::cross_engine;
      c.value = *rep.cross_engine_deviation;
      c.passed = c.value <= kCrossEngineTolerance;
      std::ostringstream os;
      os << "relative sup-norm " << c.value << " where survival > " << kCrossEngineSurvivalFloor
         << " (need <= " << kCrossEngineTolerance << ")";
      c.detail = os.str();
      rep.checks.push_back(std::move(c));
      break;
    }
    }
  }

  if (!cfg.approx)
    result.approx.reset(), rep.approx.reset();
  if (!cfg.exact)
    result.exact.reset(), rep.exact.reset();
  return result;
}

std::string render_csv(const RunResult &result) {
  std::string out = "t,w,u,density_approx,survival_approx,p_exact_per_dt,survival_exact\n";
  const RunReport &rep = result.report;
  for (std::size_t k = 1; k <= rep.steps; ++k) {
    out += format_number(static_cast<double>(k) * rep.dt);
    out += ',';
    if (const auto &dd = result.approx) {
      out += format_number(dd->w[k]) + ',' + format_number(dd->u[k]) + ',' +
             format_number(dd->density[k]) + ',' + format_number(dd->survival[k]);
    } else {
      out += ",,,";
    }
    out += ',';
    if (const auto &chain = result.exact) {
      // After early termination the chain has nothing left to detect.
      const bool ran = k - 1 < chain->size();
      out += format_number(ran ? chain->p_exact[k - 1] / chain->dt : 0.0) + ',' +
             format_number(ran ? chain->survival[k - 1] : chain->final_survival());
    } else {
      out += ',';
    }
    out += '\n';
  }
  return out;
}

std::string render_report(const RunReport &rep) {
  ordered_json j;
  j["scenario"] = rep.scenario;
  j["kind"] = rep.kind;
  j["N"] = rep.dimension;
  j["dt"] = rep.dt;
  j["T_max"] = rep.t_max;
  j["steps"] = rep.steps;
  j["warnings"] = rep.warnings;
  if (rep.stage1) {
    const auto &s = *rep.stage1;
    j["stage1"] = {{"steps", s.steps},
                   {"selected_step", s.selected_step},
                   {"selected_time", s.selected_time},
                   {"total", s.total},
                   {"final_survival", s.final_survival},
                   {"conditional_mean", optional_number(s.conditional_mean)}};
  }
  if (rep.approx) {
    const auto &a = *rep.approx;
    j["approx"] = {{"total", a.total},
                   {"tail", a.tail},
                   {"integrated_total", a.integrated_total},
                   {"mean", a.mean},
                   {"conditional_mean", optional_number(a.conditional_mean)},
                   {"validity_epsilon", a.validity_epsilon},
                   {"certain_within_horizon", a.certain_within_horizon},
                   {"has_capped_region", a.has_capped_region}};
  } else {
    j["approx"] = nullptr;
  }
  if (rep.exact) {
    const auto &e = *rep.exact;
    j["exact"] = {{"total", e.total},
                  {"final_survival", e.final_survival},
                  {"mean", e.mean},
                  {"conditional_mean", optional_number(e.conditional_mean)},
                  {"steps_run", e.steps_run},
                  {"terminated_early", e.terminated_early}};
  } else {
    j["exact"] = nullptr;
  }
  j["cross_engine_deviation"] =
      rep.cross_engine_deviation ? finite_or_null(*rep.cross_engine_deviation) : nullptr;
  j["edge_probability"] = optional_number(rep.edge_probability);
  ordered_json checks = ordered_json::array();
  for (const auto &c : rep.checks) {
    ordered_json m = ordered_json::object();
    for (const auto &[k, v] : c.metrics)
      m[k] = finite_or_null(v);
    checks.push_back({{"check", to_string(c.kind)},
                      {"passed", c.passed},
                      {"value", finite_or_null(c.value)},
                      {"detail", c.detail},
                      {"metrics", m}});
  }
  j["checks"] = checks;
  j["all_checks_passed"] = rep.all_checks_passed();
  return dump(j);
}

void write_outputs(const RunOutputs &outputs, const std::string &csv, const std::string &json) {
  auto write = [](const std::filesystem::path &path, const std::string &text) {
    std::error_code ec;
    if (path.has_parent_path())
      std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.close();
    if (!out)
      throw IoError("failed writing " + path.string());
  };
  if (outputs.csv_path)
    write(*outputs.csv_path, csv);
  if (outputs.json_path)
    write(*outputs.json_path, json);
}

SweepReport sweep_dt(const RunConfig &cfg, std::vector<double> dt_list) {
  if (dt_list.size() < 3)
    throw ValidationError("sweep-dt: need at least three dt values");
  std::sort(dt_list.begin(), dt_list.end(), std::greater<>());
  if (std::adjacent_find(dt_list.begin(), dt_list.end()) != dt_list.end())
    throw ValidationError("sweep-dt: dt values must be distinct");

  const ScenarioSpec &spec = cfg.scenario;
  auto build = [&](double dt) {
    if (spec.kind == ScenarioKind::tunneling_1d)
      return build_tunneling_1d(std::get<TunnelingParams>(spec.parameters), dt).stage1();
    return build_scenario(spec, dt);
  };

  SweepReport sweep;
  sweep.t_max = spec.t_max;
  for (double dt : dt_list) {
    if (!(dt > 0.0) || !std::isfinite(dt))
      throw ValidationError("sweep-dt: dt values must be finite and > 0");
    if (dt > spec.t_max)
      throw ValidationError("sweep-dt: dt " + format_number(dt) + " exceeds T_max");
    const Scenario s = build(dt);
    sweep.scenario = s.name;
    const std::size_t steps = grid_steps(spec.t_max, dt);
    const ChainResult chain = run_chain(s.hamiltonian, s.detector, s.initial, dt, steps);
    sweep.rows.push_back({dt, steps, chain.p_exact.front(), chain.total()});
  }
  const Scenario s = build(dt_list.front());
  sweep.zeno = zeno_sweep(s.hamiltonian, s.detector, s.initial, dt_list);
  sweep.monotone_suppression = true;
  for (std::size_t i = 1; i < sweep.rows.size(); ++i)
    if (!(sweep.rows[i].total_exact < sweep.rows[i - 1].total_exact))
      sweep.monotone_suppression = false;
  return sweep;
}

std::string render_sweep_csv(const SweepReport &sweep) {
  std::string out = "dt,steps,p_first_step,total_exact\n";
  for (const auto &r : sweep.rows)
    out += format_number(r.dt) + ',' + std::to_string(r.steps) + ',' +
           format_number(r.p_first_step) + ',' + format_number(r.total_exact) + '\n';
  return out;
}

std::string render_sweep_report(const SweepReport &sweep) {
  ordered_json rows = ordered_json::array();
  for (const auto &r : sweep.rows)
    rows.push_back({{"dt", r.dt},
                    {"steps", r.steps},
                    {"p_first_step", r.p_first_step},
                    {"total_exact", r.total_exact}});
  ordered_json j;
  j["scenario"] = sweep.scenario;
  j["T_max"] = sweep.t_max;
  j["rows"] = rows;
  j["zeno"] = {{"slope", finite_or_null(sweep.zeno.slope)},
               {"coefficient", sweep.zeno.coefficient},
               {"extrapolated_coefficient", sweep.zeno.extrapolated_coefficient},
               {"dropped_points", sweep.zeno.dropped},
               {"degenerate", sweep.zeno.degenerate}};
  j["monotone_suppression"] = sweep.monotone_suppression;
  return dump(j);
}

} // namespace qstopwatch
