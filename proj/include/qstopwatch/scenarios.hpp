#pragma once

// Builders that turn physical setups into (H, pi, psi0, dt) tuples.
//
// Lattice models put site j at x_j = j * a, j = 0..N-1, with hard walls at
// both ends. Position intervals are inclusive.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "qstopwatch/chain.hpp"
#include "qstopwatch/linalg.hpp"

namespace qstopwatch {

/// A fully built detection problem. Construction checks that H is Hermitian,
/// pi idempotent and psi0 = (1 - pi) psi0.
struct Scenario {
  std::string name;
  HermitianOperator hamiltonian;
  Projector detector;
  QuantumState initial;
  double dt;
  /// Non-fatal configuration notes (dispersion, recurrence, regime).
  std::vector<std::string> warnings;
  /// Site coordinates for lattice models, empty otherwise.
  std::vector<double> positions;
  /// Undetected sites in the outer 5% of a lattice on either side.
  std::vector<Index> edge_sites;

  Scenario(std::string name, HermitianOperator h, Projector pi, QuantumState psi0, double dt);
};

struct Lattice {
  std::size_t sites = 0;
  double spacing = 1.0;
  double mass = 1.0;

  double hopping() const { return 1.0 / (2.0 * mass * spacing * spacing); }
  double position(std::size_t j) const { return static_cast<double>(j) * spacing; }
  double length() const { return position(sites - 1); }
};

struct Interval {
  double z_min = 0.0;
  double z_max = 0.0;
};

struct GaussianPacket {
  double x0 = 0.0;
  double sigma = 1.0;
  double k0 = 0.0;
};

/// Hopping -1/(2 m a^2), on-site 1/(m a^2), hard walls.
Matrix kinetic_matrix(const Lattice &lattice);
std::vector<Index> sites_in(const Lattice &lattice, const Interval &interval);
/// exp(-(x - x0)^2 / (4 sigma^2)) exp(i k0 x) sampled on sites, unnormalized.
Vector sample_packet(const Lattice &lattice, const GaussianPacket &packet);
/// sin(k0 a) / (m a), the lattice group velocity.
double group_velocity(const Lattice &lattice, double k0);
/// sqrt(<psi|v^2|psi>) with v = i [H, x].
double rms_velocity(const HermitianOperator &h, std::span<const double> positions,
                    const QuantumState &psi);
/// Inner/outer 5% guard sites, minus anything the detector covers.
std::vector<Index> lattice_edge_sites(std::size_t sites, const Projector &pi);
inline constexpr double kEdgeFraction = 0.05;
inline constexpr double kEdgeProbabilityLimit = 0.01;

// Two-level decay.

/// H = omega sigma_x, psi0 = |0>, pi = |1><1|. omega >= 0.
Scenario build_two_level_decay(double omega, double dt);
/// Two-level model whose per-tick detection probability is exactly p.
Scenario build_constant_hazard_model(double p, double dt);

// Discretized Wigner-Weisskopf decay.

struct WwParams {
  std::size_t modes = 256;
  double coupling = 0.05;
  double band = 20.0;
};

/// Level 0 at energy 0 coupled with strength g to M modes at cell-centred
/// energies in [-band/2, band/2]; pi projects onto the modes. Warns when the
/// recurrence time 2 pi M / band is shorter than t_max.
Scenario build_ww_decay(const WwParams &params, double dt, double t_max);
/// 2 pi g^2 M / band.
double golden_rule_rate(const WwParams &params);

// Arrival at a detector slab.

struct ArrivalParams {
  Lattice lattice;
  GaussianPacket packet;
  Interval detector;
};

/// Rejects packets whose 3-sigma window touches the detector. The packet is
/// zeroed on detector sites and renormalized.
Scenario build_arrival_1d(const ArrivalParams &params, double dt);

/// Classical rectangular packet of duration T crossing a point detector.
struct ClassicalPacketOracle {
  double traversal_time;

  /// 1/(T - t) on (0, T), 0 for t <= 0; DomainError for t >= T.
  double hazard(double t) const;
  /// ln(T/(T - t)) on [0, T); DomainError for t >= T.
  double cumulative_hazard(double t) const;
  /// 1/T on (0, T), 0 elsewhere.
  double density(double t) const;
};

ClassicalPacketOracle classical_packet_oracle(double traversal_time);

// Dwell time.

enum class DwellExit { both, left, right };

struct DwellInitial {
  enum class Recipe { box_ground, box_mode, gaussian };
  Recipe recipe = Recipe::box_ground;
  int mode = 1;
  GaussianPacket packet{};
};

struct DwellParams {
  Lattice lattice;
  Interval region;
  /// Hopping across the region boundary; empty means the bulk value.
  std::optional<double> leak;
  DwellExit exit = DwellExit::both;
  DwellInitial initial{};
};

/// pi covers the sites outside the region (only one side for left/right exit).
Scenario build_dwell_1d(const DwellParams &params, double dt);

// Tunneling time.

struct Barrier {
  double left = 0.0;
  double right = 0.0;
  double height = 0.0;
};

enum class Stage2Init { median, mean, custom_time };

struct TunnelingParams {
  Lattice lattice;
  Barrier barrier;
  GaussianPacket packet;
  Stage2Init stage2_init = Stage2Init::median;
  double stage2_time = 0.0;
};

/// Stage 1 watches for the particle leaving V1 = {x < left}; stage 2 watches
/// V2 = {x > right} starting from the collapsed stage-1 state.
struct TunnelingPlan {
  HermitianOperator hamiltonian;
  Projector leave_v1;
  Projector enter_v2;
  QuantumState initial;
  double dt;
  Stage2Init stage2_init;
  double stage2_time;
  std::vector<double> positions;
  std::vector<std::string> warnings;

  Scenario stage1() const;
};

TunnelingPlan build_tunneling_1d(const TunnelingParams &params, double dt);

struct TunnelingStage2 {
  ChainResult stage1;
  /// Tick of stage 1 whose collapsed state seeds stage 2.
  std::size_t selected_step;
  Scenario stage2;
};

/// Runs stage 1 with the exact chain for `stage1_steps` ticks, selects the
/// seeding tick, and returns stage 2 seeded with
/// normalize((1 - pi_2) pi_1 psi_c(t_sel)).
TunnelingStage2 prepare_stage2(const TunnelingPlan &plan, std::size_t stage1_steps,
                               const ChainOptions &options = {});

// Declarative description.

enum class ScenarioKind { two_level_decay, ww_decay, arrival_1d, dwell_1d, tunneling_1d, custom };

const char *to_string(ScenarioKind kind);

struct TwoLevelParams {
  double omega = 1.0;
};

struct CustomParams {
  Matrix hamiltonian;
  std::vector<Index> detector_sites;
  Vector initial;
};

using ScenarioParameters = std::variant<TwoLevelParams, WwParams, ArrivalParams, DwellParams,
                                        TunnelingParams, CustomParams>;

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::two_level_decay;
  std::size_t dimension = 2;
  ScenarioParameters parameters = TwoLevelParams{};
  double dt = 0.1;
  double t_max = 10.0;
  /// Stage-2 horizon for tunneling; defaults to t_max.
  std::optional<double> t_max_stage2;
};

/// Implied Hilbert-space dimension for a parameter set.
std::size_t implied_dimension(const ScenarioParameters &parameters);

/// Checks finite parameters, N in [2, 2048], dt > 0, T_max >= dt.
void validate(const ScenarioSpec &spec);

/// Builds the scenario with the spec's dt. Tunneling specs are rejected here;
/// use build_tunneling_1d.
Scenario build_scenario(const ScenarioSpec &spec);
Scenario build_scenario(const ScenarioSpec &spec, double dt);

} // namespace qstopwatch
