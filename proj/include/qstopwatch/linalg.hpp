#pragma once

// Dense complex linear algebra for finite-dimensional quantum systems.
//
// All objects are immutable once built. Units are hbar = 1 throughout: a
// Hamiltonian has units of inverse time and propagators are exp(-i H t).

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qstopwatch {

using Complex = std::complex<double>;
using Vector = Eigen::VectorXcd;
using Matrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kNormTolerance = 1e-10;
inline constexpr double kHermitianTolerance = 1e-10;
inline constexpr double kIdempotentTolerance = 1e-9;
inline constexpr double kUnitaryTolerance = 1e-9;
/// Squared norms at or below this are treated as an annihilated state.
inline constexpr double kCollapseFloor = 1e-14;

/// Normalized amplitude vector over a finite basis.
class QuantumState {
public:
  /// Normalizes `amplitudes`. Throws ValidationError on an empty or zero vector.
  explicit QuantumState(Vector amplitudes, std::string basis_label = "site");

  static QuantumState basis_vector(Index dimension, Index which,
                                   std::string basis_label = "site");

  const Vector &amplitudes() const noexcept { return amplitudes_; }
  Index dimension() const noexcept { return amplitudes_.size(); }
  const std::string &basis_label() const noexcept { return basis_label_; }
  Complex operator[](Index i) const { return amplitudes_[i]; }

private:
  Vector amplitudes_;
  std::string basis_label_;
};

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns).
struct Spectrum {
  RealVector values;
  Matrix vectors;
};

namespace detail {
struct SpectrumCache;
}

class HermitianOperator {
public:
  /// Validates ||M - M^dagger||_max <= 1e-10, then stores the exactly
  /// Hermitian part (M + M^dagger)/2.
  explicit HermitianOperator(Matrix matrix);

  const Matrix &matrix() const noexcept { return matrix_; }
  Index dimension() const noexcept { return matrix_.rows(); }

  /// Eigendecomposition, computed on first use and shared between copies.
  /// Safe to call concurrently.
  const Spectrum &spectrum() const;

  std::uint64_t fingerprint() const;

private:
  Matrix matrix_;
  std::shared_ptr<detail::SpectrumCache> cache_;
};

/// Hermitian idempotent operator. Diagonal 0/1 projectors keep their mask so
/// that callers can work with site lists instead of dense products.
class Projector {
public:
  /// General projector; validates Hermiticity (1e-10) and idempotency (1e-9).
  explicit Projector(Matrix matrix);

  static Projector from_mask(std::vector<bool> mask);

  Index dimension() const noexcept { return matrix_.rows(); }
  const Matrix &matrix() const noexcept { return matrix_; }
  bool is_diagonal() const noexcept { return !mask_.empty() || dimension() == 0; }
  /// Only meaningful when is_diagonal().
  const std::vector<bool> &mask() const noexcept { return mask_; }
  Index rank() const noexcept { return range_basis_.cols(); }

  /// Orthonormal columns spanning the range of P (N x rank).
  const Matrix &range_basis() const noexcept { return range_basis_; }
  /// Orthonormal columns spanning the range of 1 - P (N x (N - rank)).
  const Matrix &kernel_basis() const noexcept { return kernel_basis_; }

  Projector complement() const;

  Vector apply(const Vector &psi) const;
  /// <psi|P|psi> = ||P psi||^2.
  double expectation(const Vector &psi) const;

private:
  Projector(Matrix matrix, std::vector<bool> mask, Matrix range, Matrix kernel);

  Matrix matrix_;
  std::vector<bool> mask_;
  Matrix range_basis_;
  Matrix kernel_basis_;
};

struct UnitaryPropagator {
  Matrix matrix;
  double time = 0.0;
  /// Identity of the (H, t) pair the propagator was built from.
  std::uint64_t generator_hash = 0;

  /// ||U^dagger U - 1||_max.
  double unitarity_defect() const;
};

/// Diagonal projector with ones on `region`. Throws DimensionError when an
/// index is outside [0, dimension).
Projector make_projector(std::span<const Index> region, Index dimension);

/// exp(-i H t) from the cached spectral decomposition of H.
UnitaryPropagator propagator(const HermitianOperator &h, double t);

/// exp(-i H t) psi without forming the full propagator.
Vector evolve(const HermitianOperator &h, const Vector &psi, double t);

struct Collapse {
  QuantumState state;
  double probability;
};

/// Applies `a` and renormalizes. Throws AnnihilatedState when ||a psi||^2 is
/// at or below kCollapseFloor.
Collapse apply_and_norm(const Matrix &a, const QuantumState &psi);
Collapse apply_and_norm(const Projector &a, const QuantumState &psi);
Collapse apply_and_norm(const UnitaryPropagator &a, const QuantumState &psi);

/// sqrt(<H^2> - <H>^2), evaluated as ||(H - <H>) psi||.
double energy_uncertainty(const HermitianOperator &h, const QuantumState &psi);

double hermiticity_defect(const Matrix &m);
double idempotency_defect(const Matrix &m);

} // namespace qstopwatch
