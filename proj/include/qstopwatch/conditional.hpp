#pragma once

// Conditional (not-yet-detected) evolution under the projected Hamiltonian
// Hbar = (1 - pi) H (1 - pi), and the per-step hazard it implies.

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "qstopwatch/linalg.hpp"

namespace qstopwatch {

/// Per-step detection probabilities on the grid t_k = k*dt, k = 1..K.
struct HazardSeries {
  double dt = 0.0;
  std::vector<double> times;
  /// Conditional detection probability at each t_k.
  std::vector<double> p;
  /// Hazard rate w_k = p_k / dt.
  std::vector<double> w;
  /// Hazard at t = 0, used only as the left endpoint of quadratures.
  double w_initial = 0.0;

  std::size_t size() const noexcept { return w.size(); }

  /// Samples a hazard function at t = 0, dt, ..., K*dt.
  static HazardSeries from_function(const std::function<double(double)> &hazard,
                                    double dt, std::size_t steps);
};

/// (1 - pi) H (1 - pi). Throws DimensionError on mismatched operands.
HermitianOperator conditional_hamiltonian(const HermitianOperator &h, const Projector &pi);

/// 1 - |<psi| exp(-i H dt) |psi>|; small values mean the state barely moves
/// during one detector tick.
double validity_epsilon(const HermitianOperator &h, const QuantumState &psi, double dt);

inline constexpr double kDefaultValidityWarnThreshold = 0.01;

class ConditionalEvolution {
public:
  /// Requires dt > 0 and (1 - pi) psi0 = psi0 within 1e-10.
  ConditionalEvolution(HermitianOperator h, Projector pi, QuantumState psi0, double dt);

  const HermitianOperator &hamiltonian() const noexcept;
  const HermitianOperator &projected_hamiltonian() const noexcept;
  const Projector &detector() const noexcept;
  const QuantumState &initial_state() const noexcept;
  double dt() const noexcept;
  const UnitaryPropagator &step_propagator() const noexcept;

  /// exp(-i Hbar (k-1) dt) psi0, the undetected state just before tick k.
  /// k = 0 continues the closed form to t = -dt.
  Vector pre_step_state(std::size_t k) const;
  Vector pre_step_state_before_origin() const;

  /// psi_c(t_k) = exp(-i H dt) exp(-i Hbar (t_k - dt)) psi0, k >= 1.
  QuantumState conditional_state(std::size_t k) const;
  /// Same, addressed by time. Throws GridError unless t = k*dt, k >= 1.
  QuantumState conditional_state_at(double t) const;

  /// <psi_c(t_k)|pi|psi_c(t_k)>.
  double step_probability(std::size_t k) const;

  HazardSeries hazard_series(std::size_t steps) const;

  /// Largest validity epsilon over psi0 and `samples` evenly spaced
  /// conditional states up to step `steps`.
  double max_validity_epsilon(std::size_t steps, std::size_t samples = 32) const;

  /// pi-range components of exp(-i H dt) in the eigenbasis of Hbar restricted
  /// to the undetected subspace: rank(pi) x rank(1 - pi).
  const Matrix &detection_map() const noexcept;
  /// Eigenvalues of Hbar on the undetected subspace.
  const RealVector &reduced_energies() const noexcept;
  /// Eigenvectors of Hbar on the undetected subspace, embedded in the full
  /// space (N x rank(1 - pi)).
  const Matrix &reduced_eigenvectors() const noexcept;
  /// Coordinates of psi0 in reduced_eigenvectors().
  const Vector &initial_coefficients() const noexcept;

private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;

  Vector phased_coefficients(double elapsed) const;
};

} // namespace qstopwatch
