#pragma once

// Stroboscopic detection chain: unitary ticks exp(-i H dt) interleaved with
// projective checks {pi, 1 - pi}. This is the exact reference every
// approximate distribution is compared against.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "qstopwatch/linalg.hpp"

namespace qstopwatch {

struct ChainOptions {
  /// Stop once the undetected probability drops below this.
  double survival_floor = 1e-12;
  /// Sites whose conditional occupation is tracked (lattice edge guard).
  std::vector<Index> watch_sites;
};

struct ChainResult {
  double dt = 0.0;
  std::vector<double> times;
  /// Conditional detection probability at t_k given no detection before.
  std::vector<double> p_cond;
  /// Probability that the first detection happens at t_k.
  std::vector<double> p_exact;
  /// Probability of no detection through t_k.
  std::vector<double> survival;
  bool terminated_early = false;
  /// Largest conditional probability found on ChainOptions::watch_sites.
  double watch_max = 0.0;

  std::size_t size() const noexcept { return times.size(); }
  double final_survival() const noexcept { return survival.empty() ? 1.0 : survival.back(); }
  double total() const noexcept;
  /// Sum of t_k * P(t_k); unconditional, so it carries the tail truncation.
  double mean_time() const noexcept;
};

/// Requires psi0 in the undetected subspace (1e-10) and steps >= 1.
ChainResult run_chain(const HermitianOperator &h, const Projector &pi, const QuantumState &psi0,
                      double dt, std::size_t steps, const ChainOptions &options = {});

/// The normalized state exp(-i H dt) psi_{k-1} that is checked at tick k,
/// where psi_{k-1} is the chain's conditional state after k-1 negative checks.
QuantumState chain_state(const HermitianOperator &h, const Projector &pi,
                         const QuantumState &psi0, double dt, std::size_t k);

struct Branch {
  /// Tick at which this branch's detector fired; empty for the undetected branch.
  std::optional<std::size_t> detection_step;
  double weight = 0.0;
};

/// System-apparatus branch weights: entry k-1 lists the k + 1 branches at t_k.
struct BranchLedger {
  double dt = 0.0;
  std::vector<std::vector<Branch>> steps;
};

inline constexpr std::size_t kMaxLedgerSteps = 64;

/// Evolves every branch vector literally: detected branches keep evolving
/// under exp(-i H dt), the undetected one is projected each tick.
BranchLedger branch_ledger(const HermitianOperator &h, const Projector &pi,
                           const QuantumState &psi0, double dt, std::size_t k_max);

struct ZenoPoint {
  double dt;
  double p_first_step;
};

struct ZenoSweep {
  std::vector<ZenoPoint> points;
  std::size_t dropped = 0;
  /// Least-squares slope of log p against log dt; NaN when degenerate.
  double slope = 0.0;
  /// <psi0| H pi H |psi0>, the leading small-dt coefficient.
  double coefficient = 0.0;
  /// p/dt^2 extrapolated to dt = 0 with a quadratic fit in dt.
  double extrapolated_coefficient = 0.0;
  bool degenerate = false;
};

/// First-step probability ||pi exp(-i H dt) psi0||^2 over a decreasing dt list
/// (at least three values). Points below 1e-300 are dropped.
ZenoSweep zeno_sweep(const HermitianOperator &h, const Projector &pi, const QuantumState &psi0,
                     std::span<const double> dt_list);

} // namespace qstopwatch
