#include "qstopwatch/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "qstopwatch/errors.hpp"

namespace qstopwatch {

namespace {

void require(bool ok, const std::string &message) {
  if (!ok)
    throw ValidationError(message);
}

void require_finite(double v, const char *name) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << name << " must be finite";
    throw ValidationError(os.str());
  }
}

void validate_lattice(const Lattice &l) {
  require(l.sites >= 2 && l.sites <= 2048, "lattice: sites must lie in [2, 2048]");
  require_finite(l.spacing, "lattice spacing");
  require_finite(l.mass, "mass");
  require(l.spacing > 0.0, "lattice: spacing must be > 0");
  require(l.mass > 0.0, "lattice: mass must be > 0");
}

void validate_packet(const Lattice &l, const GaussianPacket &p) {
  require_finite(p.x0, "packet.x0");
  require_finite(p.sigma, "packet.sigma");
  require_finite(p.k0, "packet.k0");
  require(p.sigma > 0.0, "packet: sigma must be > 0");
  require(p.x0 >= 0.0 && p.x0 <= l.length(), "packet: x0 lies outside the lattice");
}

void warn_dispersion(const Lattice &l, double k0, std::vector<std::string> &warnings) {
  const double edge = std::numbers::pi / l.spacing;
  if (std::abs(k0) > 0.9 * edge) {
    std::ostringstream os;
    os << "packet k0 = " << k0 << " is within 10% of the lattice band edge pi/a = " << edge
       << "; dispersion departs strongly from p^2/2m";
    warnings.push_back(os.str());
  }
}

std::vector<double> lattice_positions(const Lattice &l) {
  std::vector<double> x(l.sites);
  for (std::size_t j = 0; j < l.sites; ++j)
    x[j] = l.position(j);
  return x;
}

Vector restrict_and_check(Vector v, const std::vector<bool> &allowed, double tolerance,
                          const std::string &what) {
  double outside = 0.0;
  for (Index i = 0; i < v.size(); ++i)
    if (!allowed[static_cast<std::size_t>(i)])
      outside += std::norm(v[i]);
  const double total = v.squaredNorm();
  if (std::sqrt(outside / total) > tolerance) {
    std::ostringstream os;
    os << what << " (amplitude " << std::sqrt(outside / total) << " outside)";
    throw ValidationError(os.str());
  }
  for (Index i = 0; i < v.size(); ++i)
    if (!allowed[static_cast<std::size_t>(i)])
      v[i] = 0.0;
  return v;
}

Scenario lattice_scenario(std::string name, Matrix h, Projector pi, Vector psi0, double dt,
                          const Lattice &lattice, std::vector<std::string> warnings) {
  Scenario s(std::move(name), HermitianOperator(std::move(h)), std::move(pi),
             QuantumState(std::move(psi0)), dt);
  s.positions = lattice_positions(lattice);
  s.edge_sites = lattice_edge_sites(lattice.sites, s.detector);
  s.warnings = std::move(warnings);
  return s;
}

} // namespace

Scenario::Scenario(std::string name_, HermitianOperator h, Projector pi, QuantumState psi0,
                   double dt_)
    : name(std::move(name_)), hamiltonian(std::move(h)), detector(std::move(pi)),
      initial(std::move(psi0)), dt(dt_) {
  if (hamiltonian.dimension() != detector.dimension() ||
      hamiltonian.dimension() != initial.dimension())
    throw DimensionError(name + ": H, pi and psi0 dimensions differ");
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw ValidationError(name + ": dt must be finite and > 0");
  const double leak = detector.apply(initial.amplitudes()).norm();
  if (leak > kNormTolerance) {
    std::ostringstream os;
    os << name << ": initial state overlaps the detector (||pi psi0|| = " << leak << ")";
    throw ValidationError(os.str());
  }
}

Matrix kinetic_matrix(const Lattice &lattice) {
  const auto n = static_cast<Index>(lattice.sites);
  const double t = lattice.hopping();
  Matrix h = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    h(i, i) = 2.0 * t;
    if (i + 1 < n) {
      h(i, i + 1) = -t;
      h(i + 1, i) = -t;
    }
  }
  return h;
}

std::vector<Index> sites_in(const Lattice &lattice, const Interval &interval) {
  const double tol = 1e-9 * lattice.spacing;
  std::vector<Index> out;
  for (std::size_t j = 0; j < lattice.sites; ++j) {
    const double x = lattice.position(j);
    if (x >= interval.z_min - tol && x <= interval.z_max + tol)
      out.push_back(static_cast<Index>(j));
  }
  return out;
}

Vector sample_packet(const Lattice &lattice, const GaussianPacket &packet) {
  const auto n = static_cast<Index>(lattice.sites);
  Vector v(n);
  for (Index j = 0; j < n; ++j) {
    const double x = lattice.position(static_cast<std::size_t>(j));
    const double d = x - packet.x0;
    v[j] = std::exp(-d * d / (4.0 * packet.sigma * packet.sigma)) *
           std::exp(Complex(0.0, packet.k0 * x));
  }
  return v;
}

double group_velocity(const Lattice &lattice, double k0) {
  return std::sin(k0 * lattice.spacing) / (lattice.mass * lattice.spacing);
}

double rms_velocity(const HermitianOperator &h, std::span<const double> positions,
                    const QuantumState &psi) {
  const Index n = h.dimension();
  if (static_cast<Index>(positions.size()) != n || psi.dimension() != n)
    throw DimensionError("rms_velocity: dimension mismatch");
  Matrix v(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      v(i, j) = Complex(0.0, 1.0) * h.matrix()(i, j) *
                (positions[static_cast<std::size_t>(j)] - positions[static_cast<std::size_t>(i)]);
  return (v * psi.amplitudes()).norm();
}

std::vector<Index> lattice_edge_sites(std::size_t sites, const Projector &pi) {
  const auto width = static_cast<std::size_t>(std::ceil(kEdgeFraction * static_cast<double>(sites)));
  std::vector<Index> out;
  auto consider = [&](std::size_t j) {
    if (!pi.is_diagonal() || !pi.mask()[j])
      out.push_back(static_cast<Index>(j));
  };
  for (std::size_t j = 0; j < std::min(width, sites); ++j)
    consider(j);
  for (std::size_t j = sites - std::min(width, sites); j < sites; ++j)
    if (j >= width)
      consider(j);
  return out;
}

Scenario build_two_level_decay(double omega, double dt) {
  require_finite(omega, "omega");
  require(omega >= 0.0, "two_level_decay: omega must be >= 0");
  Matrix h = Matrix::Zero(2, 2);
  h(0, 1) = omega;
  h(1, 0) = omega;
  const Index detected[] = {1};
  return Scenario("two_level_decay", HermitianOperator(std::move(h)),
                  make_projector(detected, 2), QuantumState::basis_vector(2, 0, "level"), dt);
}

Scenario build_constant_hazard_model(double p, double dt) {
  require(p >= 0.0 && p <= 1.0, "constant hazard model: p must lie in [0, 1]");
  require(dt > 0.0, "constant hazard model: dt must be > 0");
  Scenario s = build_two_level_decay(std::asin(std::sqrt(p)) / dt, dt);
  s.name = "constant_hazard";
  return s;
}

double golden_rule_rate(const WwParams &params) {
  return 2.0 * std::numbers::pi * params.coupling * params.coupling *
         static_cast<double>(params.modes) / params.band;
}

Scenario build_ww_decay(const WwParams &params, double dt, double t_max) {
  require(params.modes >= 32, "ww_decay: need at least 32 continuum modes");
  require(params.modes + 1 <= 2048, "ww_decay: M + 1 must not exceed 2048");
  require_finite(params.coupling, "coupling g");
  require_finite(params.band, "band");
  require(params.coupling >= 0.0, "ww_decay: coupling must be >= 0");
  require(params.band > 0.0, "ww_decay: band must be > 0");

  const auto m = static_cast<Index>(params.modes);
  const double spacing = params.band / static_cast<double>(params.modes);
  Matrix h = Matrix::Zero(m + 1, m + 1);
  for (Index j = 1; j <= m; ++j) {
    h(j, j) = -0.5 * params.band + (static_cast<double>(j) - 0.5) * spacing;
    h(0, j) = params.coupling;
    h(j, 0) = params.coupling;
  }
  std::vector<Index> modes(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j)
    modes[static_cast<std::size_t>(j)] = j + 1;

  Scenario s("ww_decay", HermitianOperator(std::move(h)), make_projector(modes, m + 1),
             QuantumState::basis_vector(m + 1, 0, "level"), dt);
  const double recurrence = 2.0 * std::numbers::pi / spacing;
  if (recurrence < t_max) {
    std::ostringstream os;
    os << "ww_decay: recurrence time 2*pi/spacing = " << recurrence
       << " is shorter than T_max = " << t_max << "; increase M or decrease band";
    s.warnings.push_back(os.str());
  }
  return s;
}

Scenario build_arrival_1d(const ArrivalParams &params, double dt) {
  const Lattice &l = params.lattice;
  validate_lattice(l);
  validate_packet(l, params.packet);
  const auto detector = sites_in(l, params.detector);
  require(!detector.empty(), "arrival_1d: detector covers no lattice sites");

  const double lo = params.packet.x0 - 3.0 * params.packet.sigma;
  const double hi = params.packet.x0 + 3.0 * params.packet.sigma;
  if (hi >= params.detector.z_min && lo <= params.detector.z_max) {
    std::ostringstream os;
    os << "arrival_1d: packet overlaps detector: 3-sigma window [" << lo << ", " << hi
       << "] intersects detector [" << params.detector.z_min << ", " << params.detector.z_max
       << "]";
    throw ValidationError(os.str());
  }

  std::vector<std::string> warnings;
  warn_dispersion(l, params.packet.k0, warnings);

  Projector pi = make_projector(detector, static_cast<Index>(l.sites));
  Vector psi = sample_packet(l, params.packet);
  std::vector<bool> allowed(l.sites);
  for (std::size_t j = 0; j < l.sites; ++j)
    allowed[j] = !pi.mask()[j];
  psi = restrict_and_check(std::move(psi), allowed, 1.0, "arrival_1d: packet");
  return lattice_scenario("arrival_1d", kinetic_matrix(l), std::move(pi), std::move(psi), dt, l,
                          std::move(warnings));
}

ClassicalPacketOracle classical_packet_oracle(double traversal_time) {
  if (!(traversal_time > 0.0) || !std::isfinite(traversal_time))
    throw ValidationError("classical_packet_oracle: T must be finite and > 0");
  return ClassicalPacketOracle{traversal_time};
}

double ClassicalPacketOracle::hazard(double t) const {
  if (t >= traversal_time)
    throw DomainError("classical packet: hazard diverges at t >= T");
  if (t < 0.0)
    return 0.0;
  return 1.0 / (traversal_time - t);
}

double ClassicalPacketOracle::cumulative_hazard(double t) const {
  if (t >= traversal_time)
    throw DomainError("classical packet: cumulative hazard is infinite at t >= T");
  if (t <= 0.0)
    return 0.0;
  return std::log(traversal_time / (traversal_time - t));
}

double ClassicalPacketOracle::density(double t) const {
  return (t > 0.0 && t < traversal_time) ? 1.0 / traversal_time : 0.0;
}

Scenario build_dwell_1d(const DwellParams &params, double dt) {
  const Lattice &l = params.lattice;
  validate_lattice(l);
  const auto region = sites_in(l, params.region);
  require(!region.empty(), "dwell_1d: region covers no lattice sites");
  const Index first = region.front();
  const Index last = region.back();

  Matrix h = kinetic_matrix(l);
  if (params.leak) {
    require_finite(*params.leak, "leak");
    require(*params.leak >= 0.0, "dwell_1d: leak hopping must be >= 0");
    const double leak = -*params.leak;
    if (first > 0)
      h(first - 1, first) = h(first, first - 1) = leak;
    if (last + 1 < static_cast<Index>(l.sites))
      h(last, last + 1) = h(last + 1, last) = leak;
  }

  std::vector<Index> detected;
  for (Index j = 0; j < static_cast<Index>(l.sites); ++j) {
    const bool left = j < first;
    const bool right = j > last;
    if ((left && params.exit != DwellExit::right) || (right && params.exit != DwellExit::left))
      detected.push_back(j);
  }
  Projector pi = make_projector(detected, static_cast<Index>(l.sites));

  std::vector<bool> inside(l.sites, false);
  for (Index j : region)
    inside[static_cast<std::size_t>(j)] = true;

  Vector psi = Vector::Zero(static_cast<Index>(l.sites));
  const auto width = static_cast<double>(region.size());
  switch (params.initial.recipe) {
  case DwellInitial::Recipe::box_ground:
  case DwellInitial::Recipe::box_mode: {
    const int n = params.initial.recipe == DwellInitial::Recipe::box_ground ? 1
                                                                            : params.initial.mode;
    require(n >= 1 && n <= static_cast<int>(region.size()),
            "dwell_1d: box mode must lie in [1, region sites]");
    for (std::size_t i = 0; i < region.size(); ++i)
      psi[region[i]] = std::sin(std::numbers::pi * n * (static_cast<double>(i) + 1.0) /
                                (width + 1.0));
    break;
  }
  case DwellInitial::Recipe::gaussian:
    validate_packet(l, params.initial.packet);
    psi = restrict_and_check(sample_packet(l, params.initial.packet), inside, kNormTolerance,
                             "dwell_1d: initial state not supported in the region");
    break;
  }
  return lattice_scenario("dwell_1d", std::move(h), std::move(pi), std::move(psi), dt, l, {});
}

Scenario TunnelingPlan::stage1() const {
  Scenario s("tunneling_1d/stage1", hamiltonian, leave_v1, initial, dt);
  s.positions = positions;
  s.edge_sites = lattice_edge_sites(positions.size(), leave_v1);
  s.warnings = warnings;
  return s;
}

TunnelingPlan build_tunneling_1d(const TunnelingParams &params, double dt) {
  const Lattice &l = params.lattice;
  validate_lattice(l);
  validate_packet(l, params.packet);
  const Barrier &b = params.barrier;
  require_finite(b.left, "barrier.left");
  require_finite(b.right, "barrier.right");
  require_finite(b.height, "barrier.height");
  require(b.right >= b.left, "tunneling_1d: barrier right edge must not precede left edge");

  const auto barrier_sites = sites_in(l, {b.left, b.right});
  require(!barrier_sites.empty(), "tunneling_1d: barrier covers no lattice sites");
  const Index first = barrier_sites.front();
  const Index last = barrier_sites.back();
  const auto n = static_cast<Index>(l.sites);
  require(first > 0, "tunneling_1d: region V1 left of the barrier is empty");
  require(last + 1 < n, "tunneling_1d: region V2 right of the barrier is empty");

  if (params.packet.x0 + 3.0 * params.packet.sigma >= l.position(static_cast<std::size_t>(first))) {
    std::ostringstream os;
    os << "tunneling_1d: packet not in V1: 3-sigma edge " << params.packet.x0 + 3.0 * params.packet.sigma
       << " reaches the barrier at " << l.position(static_cast<std::size_t>(first));
    throw ValidationError(os.str());
  }

  std::vector<std::string> warnings;
  warn_dispersion(l, params.packet.k0, warnings);
  const double kinetic =
      (1.0 - std::cos(params.packet.k0 * l.spacing)) / (l.mass * l.spacing * l.spacing);
  if (b.height <= kinetic) {
    std::ostringstream os;
    os << "tunneling_1d: barrier height " << b.height << " does not exceed the packet kinetic energy "
       << kinetic << "; the barrier region is classically allowed";
    warnings.push_back(os.str());
  }

  Matrix h = kinetic_matrix(l);
  for (Index j = first; j <= last; ++j)
    h(j, j) += b.height;

  std::vector<Index> outside_v1, v2;
  for (Index j = first; j < n; ++j)
    outside_v1.push_back(j);
  for (Index j = last + 1; j < n; ++j)
    v2.push_back(j);
  Projector leave = make_projector(outside_v1, n);
  Projector enter = make_projector(v2, n);

  std::vector<bool> in_v1(l.sites, false);
  for (Index j = 0; j < first; ++j)
    in_v1[static_cast<std::size_t>(j)] = true;
  Vector psi = restrict_and_check(sample_packet(l, params.packet), in_v1, 1.0, "tunneling_1d");

  if (params.stage2_init == Stage2Init::custom_time)
    require(params.stage2_time > 0.0 && std::isfinite(params.stage2_time),
            "tunneling_1d: custom stage-2 time must be finite and > 0");

  return TunnelingPlan{HermitianOperator(std::move(h)),
                       std::move(leave),
                       std::move(enter),
                       QuantumState(std::move(psi)),
                       dt,
                       params.stage2_init,
                       params.stage2_time,
                       lattice_positions(l),
                       std::move(warnings)};
}

TunnelingStage2 prepare_stage2(const TunnelingPlan &plan, std::size_t stage1_steps,
                               const ChainOptions &options) {
  ChainResult stage1 =
      run_chain(plan.hamiltonian, plan.leave_v1, plan.initial, plan.dt, stage1_steps, options);
  const double total = stage1.total();
  if (!(total > 1e-12))
    throw ValidationError(
        "tunneling_1d: stage 1 never detects the particle leaving V1 within the horizon");

  std::size_t k = 1;
  switch (plan.stage2_init) {
  case Stage2Init::median: {
    double acc = 0.0;
    for (std::size_t i = 0; i < stage1.size(); ++i) {
      acc += stage1.p_exact[i];
      if (acc >= 0.5 * total) {
        k = i + 1;
        break;
      }
    }
    break;
  }
  case Stage2Init::mean: {
    const double t = stage1.mean_time() / total;
    k = static_cast<std::size_t>(std::clamp(std::round(t / plan.dt), 1.0,
                                            static_cast<double>(stage1.size())));
    break;
  }
  case Stage2Init::custom_time: {
    const double ratio = plan.stage2_time / plan.dt;
    const double r = std::round(ratio);
    if (std::abs(ratio - r) > 1e-9 * std::max(1.0, r) || r < 1.0)
      throw GridError("tunneling_1d: stage-2 time is not a positive multiple of dt");
    if (r > static_cast<double>(stage1.size()))
      throw ValidationError("tunneling_1d: stage-2 time lies beyond the stage-1 horizon");
    k = static_cast<std::size_t>(r);
    break;
  }
  }

  const QuantumState checked = chain_state(plan.hamiltonian, plan.leave_v1, plan.initial, plan.dt, k);
  const Vector collapsed = plan.enter_v2.complement().apply(plan.leave_v1.apply(checked.amplitudes()));
  const double n2 = collapsed.squaredNorm();
  if (n2 <= kCollapseFloor)
    throw AnnihilatedState("tunneling_1d: collapsed stage-1 state has no weight outside V2", n2);

  Scenario stage2("tunneling_1d/stage2", plan.hamiltonian, plan.enter_v2, QuantumState(collapsed),
                  plan.dt);
  stage2.positions = plan.positions;
  stage2.edge_sites = lattice_edge_sites(plan.positions.size(), plan.enter_v2);
  stage2.warnings = plan.warnings;
  return TunnelingStage2{std::move(stage1), k, std::move(stage2)};
}

const char *to_string(ScenarioKind kind) {
  switch (kind) {
  case ScenarioKind::two_level_decay:
    return "two_level_decay";
  case ScenarioKind::ww_decay:
    return "ww_decay";
  case ScenarioKind::arrival_1d:
    return "arrival_1d";
  case ScenarioKind::dwell_1d:
    return "dwell_1d";
  case ScenarioKind::tunneling_1d:
    return "tunneling_1d";
  case ScenarioKind::custom:
    return "custom";
  }
  return "unknown";
}

std::size_t implied_dimension(const ScenarioParameters &parameters) {
  struct Visitor {
    std::size_t operator()(const TwoLevelParams &) const { return 2; }
    std::size_t operator()(const WwParams &p) const { return p.modes + 1; }
    std::size_t operator()(const ArrivalParams &p) const { return p.lattice.sites; }
    std::size_t operator()(const DwellParams &p) const { return p.lattice.sites; }
    std::size_t operator()(const TunnelingParams &p) const { return p.lattice.sites; }
    std::size_t operator()(const CustomParams &p) const {
      return static_cast<std::size_t>(p.hamiltonian.rows());
    }
  };
  return std::visit(Visitor{}, parameters);
}

void validate(const ScenarioSpec &spec) {
  require(std::isfinite(spec.dt) && spec.dt > 0.0, "scenario: dt must be finite and > 0");
  require(std::isfinite(spec.t_max) && spec.t_max >= spec.dt,
          "scenario: T_max must be finite and >= dt");
  if (spec.t_max_stage2)
    require(std::isfinite(*spec.t_max_stage2) && *spec.t_max_stage2 >= spec.dt,
            "scenario: stage-2 T_max must be finite and >= dt");
  require(spec.dimension >= 2 && spec.dimension <= 2048, "scenario: N must lie in [2, 2048]");
  require(implied_dimension(spec.parameters) == spec.dimension,
          "scenario: N does not match the dimension implied by the parameters");
}

Scenario build_scenario(const ScenarioSpec &spec) { return build_scenario(spec, spec.dt); }

Scenario build_scenario(const ScenarioSpec &spec, double dt) {
  struct Visitor {
    const ScenarioSpec &spec;
    double dt;
    Scenario operator()(const TwoLevelParams &p) const { return build_two_level_decay(p.omega, dt); }
    Scenario operator()(const WwParams &p) const { return build_ww_decay(p, dt, spec.t_max); }
    Scenario operator()(const ArrivalParams &p) const { return build_arrival_1d(p, dt); }
    Scenario operator()(const DwellParams &p) const { return build_dwell_1d(p, dt); }
    Scenario operator()(const TunnelingParams &) const {
      throw ValidationError("tunneling_1d is a two-stage plan; use build_tunneling_1d");
    }
    Scenario operator()(const CustomParams &p) const {
      const auto n = p.hamiltonian.rows();
      return Scenario("custom", HermitianOperator(p.hamiltonian),
                      make_projector(p.detector_sites, n), QuantumState(p.initial), dt);
    }
  };
  return std::visit(Visitor{spec, dt}, spec.parameters);
}

} // namespace qstopwatch
