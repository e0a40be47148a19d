#pragma once

// Detection-time density P(t) = w(t) exp(-u(t)), u(t) = integral of w, and
// the quantities derived from it.

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "qstopwatch/conditional.hpp"
#include "qstopwatch/linalg.hpp"

namespace qstopwatch {

/// Survival below this marks the region where the reported hazard is capped.
inline constexpr double kCapSurvival = 1e-12;
/// Tail mass below this counts as certain detection within the horizon.
inline constexpr double kCertainTail = 1e-6;

/// All series live on t_0 = 0, t_1 = dt, ..., t_K = K*dt.
struct DetectionDistribution {
  double dt = 0.0;
  std::vector<double> times;
  /// Hazard (1/time); capped where survival fell below kCapSurvival.
  std::vector<double> w;
  /// Cumulative hazard, trapezoidal on the grid, u(0) = 0.
  std::vector<double> u;
  std::vector<double> density;
  std::vector<double> survival;
  std::vector<bool> capped;
  bool has_capped_region = false;
  /// 1 - exp(-u(T_max)).
  double total = 0.0;
  /// exp(-u(T_max)); never folded back into the density.
  double tail = 1.0;
  /// Trapezoidal integral of the density, for comparison with `total`.
  double integrated_total = 0.0;

  std::size_t size() const noexcept { return times.size(); }
};

/// Throws ValidationError for negative or non-finite hazards, or when the
/// series does not reach T_max.
DetectionDistribution build_distribution(const HazardSeries &hs, double t_max);

struct TotalProbability {
  double total;
  double tail;
  bool certain_within_horizon;
};

TotalProbability total_probability(const DetectionDistribution &dd);

struct MeanDetectionTime {
  /// Integral of t P(t) over the horizon.
  double mean;
  /// mean / total; empty when total < 1e-9.
  std::optional<double> conditional_mean;
  double total;
  double tail;
};

MeanDetectionTime mean_detection_time(const DetectionDistribution &dd);

/// max_t |P(t) - w(t) (1 - integral_0^t P)| / max_t P(t), skipping the capped
/// region and the final `excluded_fraction` of the horizon.
double integral_equation_residual(const DetectionDistribution &dd,
                                  double excluded_fraction = 0.0);

/// Detection-time POVM built from one conditional evolution and the
/// distribution it produced. Effects are formed on demand; the remainder
/// operator is computed once on first request.
class PovmSet {
public:
  PovmSet(ConditionalEvolution ce, const DetectionDistribution &dd);

  /// Number of grid effects (ticks 1..K).
  std::size_t size() const noexcept { return weights_.size(); }
  double dt() const noexcept { return ce_.dt(); }

  /// K(t_k) = exp(-u(t_k)/2)/sqrt(dt) * pi exp(-i H dt) exp(-i Hbar (t_k - dt)).
  Matrix kraus(std::size_t k) const;
  /// E_k = K^dagger K.
  Matrix effect(std::size_t k) const;
  /// <psi|E_k|psi> computed as ||K(t_k) psi||^2 without forming E_k.
  double expectation(std::size_t k, const Vector &psi) const;

  /// 1 - sum_k E_k dt (N x N).
  const Matrix &remainder() const;
  /// <psi|Ebar|psi> from remainder().
  double remainder_expectation(const Vector &psi) const;
  /// <psi|Ebar|psi> + sum_k <psi|E_k|psi> dt.
  double resolution(const Vector &psi) const;

  /// Smallest eigenvalue of E_k, by direct eigensolve.
  double min_effect_eigenvalue(std::size_t k) const;
  /// Lower bound on every E_k's spectrum: each E_k is unitarily similar to
  /// exp(-u_k)/dt * U^dagger pi U.
  double effect_spectrum_bound() const;

  bool horizon_truncated() const noexcept { return tail_ > kCertainTail; }
  double tail() const noexcept { return tail_; }

private:
  struct RemainderCache;

  Vector kraus_coordinates(std::size_t k, const Vector &psi) const;

  ConditionalEvolution ce_;
  std::vector<double> weights_; // exp(-u(t_k)) / dt
  double tail_;
  Matrix basis_;           // eigenbasis of Hbar on the full space
  RealVector energies_;    // matching eigenvalues
  Matrix detection_;       // pi-range rows of exp(-i H dt), in basis_ coordinates
  std::shared_ptr<RemainderCache> remainder_;
};

PovmSet povm_set(const ConditionalEvolution &ce, const DetectionDistribution &dd);

} // namespace qstopwatch
