#include "qstopwatch/conditional.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "qstopwatch/errors.hpp"

namespace qstopwatch {

HazardSeries HazardSeries::from_function(const std::function<double(double)> &hazard,
                                         double dt, std::size_t steps) {
  if (!(dt > 0.0))
    throw ValidationError("HazardSeries::from_function: dt must be > 0");
  HazardSeries hs;
  hs.dt = dt;
  hs.w_initial = hazard(0.0);
  hs.times.reserve(steps);
  hs.p.reserve(steps);
  hs.w.reserve(steps);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double w = hazard(t);
    hs.times.push_back(t);
    hs.w.push_back(w);
    hs.p.push_back(w * dt);
  }
  return hs;
}

HermitianOperator conditional_hamiltonian(const HermitianOperator &h, const Projector &pi) {
  if (h.dimension() != pi.dimension())
    throw DimensionError("conditional_hamiltonian: H and pi dimensions differ");
  if (pi.is_diagonal()) {
    Matrix m = h.matrix();
    const auto &mask = pi.mask();
    for (Index i = 0; i < m.rows(); ++i)
      if (mask[static_cast<std::size_t>(i)]) {
        m.row(i).setZero();
        m.col(i).setZero();
      }
    return HermitianOperator(std::move(m));
  }
  const Matrix &q = pi.kernel_basis();
  const Matrix keep = q * q.adjoint();
  return HermitianOperator(keep * h.matrix() * keep);
}

double validity_epsilon(const HermitianOperator &h, const QuantumState &psi, double dt) {
  if (h.dimension() != psi.dimension())
    throw DimensionError("validity_epsilon: dimension mismatch");
  if (dt == 0.0)
    return 0.0;
  const Spectrum &s = h.spectrum();
  const Vector c = s.vectors.adjoint() * psi.amplitudes();
  Complex overlap = 0.0;
  for (Index i = 0; i < c.size(); ++i)
    overlap += std::norm(c[i]) * std::exp(Complex(0.0, -s.values[i] * dt));
  return std::max(0.0, 1.0 - std::abs(overlap));
}

struct ConditionalEvolution::Impl {
  HermitianOperator h;
  HermitianOperator hbar;
  Projector pi;
  QuantumState psi0;
  double dt;
  UnitaryPropagator step;
  RealVector energies;  // eigenvalues of Hbar on the undetected subspace
  Matrix eigenvectors;  // N x r
  Vector coefficients;  // r
  Matrix detection;     // rank(pi) x r
};

ConditionalEvolution::ConditionalEvolution(HermitianOperator h, Projector pi,
                                           QuantumState psi0, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw ValidationError("ConditionalEvolution: dt must be finite and > 0");
  if (h.dimension() != pi.dimension() || h.dimension() != psi0.dimension())
    throw DimensionError("ConditionalEvolution: H, pi and psi0 dimensions differ");
  const double leak = pi.apply(psi0.amplitudes()).norm();
  if (leak > kNormTolerance) {
    std::ostringstream os;
    os << "ConditionalEvolution: initial state not in the undetected subspace (||pi psi0|| = "
       << leak << ")";
    throw ValidationError(os.str());
  }

  HermitianOperator hbar = conditional_hamiltonian(h, pi);
  const Matrix &keep = pi.kernel_basis();
  const Matrix &det = pi.range_basis();

  Eigen::SelfAdjointEigenSolver<Matrix> solver(keep.adjoint() * h.matrix() * keep);
  if (solver.info() != Eigen::Success)
    throw Error("ConditionalEvolution: eigendecomposition of Hbar failed");

  UnitaryPropagator step = propagator(h, dt);
  Matrix vectors = keep * solver.eigenvectors();
  Vector coefficients = vectors.adjoint() * psi0.amplitudes();
  Matrix detection = det.adjoint() * (step.matrix * vectors);

  impl_ = std::make_shared<const Impl>(Impl{std::move(h), std::move(hbar), std::move(pi),
                                            std::move(psi0), dt, std::move(step),
                                            solver.eigenvalues(), std::move(vectors),
                                            std::move(coefficients), std::move(detection)});
}

const HermitianOperator &ConditionalEvolution::hamiltonian() const noexcept { return impl_->h; }
const HermitianOperator &ConditionalEvolution::projected_hamiltonian() const noexcept {
  return impl_->hbar;
}
const Projector &ConditionalEvolution::detector() const noexcept { return impl_->pi; }
const QuantumState &ConditionalEvolution::initial_state() const noexcept { return impl_->psi0; }
double ConditionalEvolution::dt() const noexcept { return impl_->dt; }
const UnitaryPropagator &ConditionalEvolution::step_propagator() const noexcept {
  return impl_->step;
}
const Matrix &ConditionalEvolution::detection_map() const noexcept { return impl_->detection; }
const RealVector &ConditionalEvolution::reduced_energies() const noexcept {
  return impl_->energies;
}
const Matrix &ConditionalEvolution::reduced_eigenvectors() const noexcept {
  return impl_->eigenvectors;
}
const Vector &ConditionalEvolution::initial_coefficients() const noexcept {
  return impl_->coefficients;
}

Vector ConditionalEvolution::phased_coefficients(double elapsed) const {
  Vector c = impl_->coefficients;
  for (Index i = 0; i < c.size(); ++i)
    c[i] *= std::exp(Complex(0.0, -impl_->energies[i] * elapsed));
  return c;
}

Vector ConditionalEvolution::pre_step_state(std::size_t k) const {
  const double elapsed = (static_cast<double>(k) - 1.0) * impl_->dt;
  return impl_->eigenvectors * phased_coefficients(elapsed);
}

Vector ConditionalEvolution::pre_step_state_before_origin() const { return pre_step_state(0); }

QuantumState ConditionalEvolution::conditional_state(std::size_t k) const {
  if (k < 1)
    throw GridError("conditional_state: step index must be >= 1");
  return QuantumState(impl_->step.matrix * pre_step_state(k),
                      impl_->psi0.basis_label());
}

QuantumState ConditionalEvolution::conditional_state_at(double t) const {
  const double ratio = t / impl_->dt;
  const double k = std::round(ratio);
  if (!std::isfinite(ratio) || std::abs(ratio - k) > 1e-9 * std::max(1.0, std::abs(k)) ||
      k < 1.0) {
    std::ostringstream os;
    os << "conditional_state_at: t = " << t << " is not a positive multiple of dt = "
       << impl_->dt;
    throw GridError(os.str());
  }
  return conditional_state(static_cast<std::size_t>(k));
}

double ConditionalEvolution::step_probability(std::size_t k) const {
  if (impl_->detection.rows() == 0)
    return 0.0;
  const double elapsed = (static_cast<double>(k) - 1.0) * impl_->dt;
  return (impl_->detection * phased_coefficients(elapsed)).squaredNorm();
}

HazardSeries ConditionalEvolution::hazard_series(std::size_t steps) const {
  if (steps < 1)
    throw ValidationError("hazard_series: step count must be >= 1");
  HazardSeries hs;
  hs.dt = impl_->dt;
  hs.times.resize(steps);
  hs.p.resize(steps);
  hs.w.resize(steps);
  hs.w_initial = step_probability(0) / impl_->dt;
  for (std::size_t k = 1; k <= steps; ++k) {
    const double p = std::clamp(step_probability(k), 0.0, 1.0);
    hs.times[k - 1] = static_cast<double>(k) * impl_->dt;
    hs.p[k - 1] = p;
    hs.w[k - 1] = p / impl_->dt;
  }
  return hs;
}

double ConditionalEvolution::max_validity_epsilon(std::size_t steps,
                                                  std::size_t samples) const {
  const Matrix &u = impl_->step.matrix;
  auto eps = [&](const Vector &v) {
    return std::max(0.0, 1.0 - std::abs(v.dot(u * v)) / v.squaredNorm());
  };
  double worst = eps(impl_->psi0.amplitudes());
  if (steps == 0 || samples == 0)
    return worst;
  const std::size_t n = std::min(samples, steps);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = 1 + (n == 1 ? 0 : i * (steps - 1) / (n - 1));
    worst = std::max(worst, eps(pre_step_state(k)));
  }
  return worst;
}

} // namespace qstopwatch
