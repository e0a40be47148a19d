#include "qstopwatch/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "qstopwatch/errors.hpp"

namespace qstopwatch {

DetectionDistribution build_distribution(const HazardSeries &hs, double t_max) {
  if (!(hs.dt > 0.0))
    throw ValidationError("build_distribution: hazard series has no positive dt");
  if (!(t_max >= hs.dt) || !std::isfinite(t_max))
    throw ValidationError("build_distribution: T_max must be finite and >= dt");
  const auto steps = static_cast<std::size_t>(std::floor(t_max / hs.dt + 1e-9));
  if (steps > hs.size()) {
    std::ostringstream os;
    os << "build_distribution: hazard series covers " << hs.size() << " steps, T_max needs "
       << steps;
    throw ValidationError(os.str());
  }
  auto check = [](double w, double t) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      std::ostringstream os;
      os << "build_distribution: invalid hazard " << w << " at t = " << t;
      throw ValidationError(os.str());
    }
  };
  check(hs.w_initial, 0.0);

  DetectionDistribution dd;
  dd.dt = hs.dt;
  const std::size_t n = steps + 1;
  dd.times.resize(n);
  dd.w.resize(n);
  dd.u.resize(n);
  dd.density.resize(n);
  dd.survival.resize(n);
  dd.capped.assign(n, false);

  dd.times[0] = 0.0;
  dd.w[0] = hs.w_initial;
  dd.u[0] = 0.0;
  dd.survival[0] = 1.0;
  dd.density[0] = hs.w_initial;
  double cap = hs.w_initial;
  for (std::size_t k = 1; k < n; ++k) {
    double w = hs.w[k - 1];
    check(w, hs.times[k - 1]);
    if (dd.survival[k - 1] < kCapSurvival) {
      dd.capped[k] = true;
      dd.has_capped_region = true;
      w = std::min(w, cap);
    } else {
      cap = w;
    }
    dd.times[k] = static_cast<double>(k) * hs.dt;
    dd.w[k] = w;
    dd.u[k] = dd.u[k - 1] + 0.5 * hs.dt * (dd.w[k - 1] + w);
    dd.survival[k] = std::exp(-dd.u[k]);
    dd.density[k] = w * dd.survival[k];
  }
  dd.tail = dd.survival.back();
  dd.total = -std::expm1(-dd.u.back());
  double integral = 0.0;
  for (std::size_t k = 1; k < n; ++k)
    integral += 0.5 * hs.dt * (dd.density[k - 1] + dd.density[k]);
  dd.integrated_total = integral;
  return dd;
}

TotalProbability total_probability(const DetectionDistribution &dd) {
  return {dd.total, dd.tail, dd.tail < kCertainTail};
}

MeanDetectionTime mean_detection_time(const DetectionDistribution &dd) {
  double mean = 0.0;
  for (std::size_t k = 1; k < dd.size(); ++k)
    mean += 0.5 * dd.dt *
            (dd.times[k - 1] * dd.density[k - 1] + dd.times[k] * dd.density[k]);
  MeanDetectionTime m{mean, std::nullopt, dd.total, dd.tail};
  if (dd.total >= 1e-9)
    m.conditional_mean = mean / dd.total;
  return m;
}

double integral_equation_residual(const DetectionDistribution &dd, double excluded_fraction) {
  if (dd.size() == 0)
    return 0.0;
  const double horizon = dd.times.back();
  const double cutoff = horizon * (1.0 - excluded_fraction);
  double peak = 0.0;
  double worst = 0.0;
  double integral = 0.0;
  for (std::size_t k = 0; k < dd.size(); ++k) {
    if (k > 0)
      integral += 0.5 * dd.dt * (dd.density[k - 1] + dd.density[k]);
    if (dd.capped[k] || dd.times[k] > cutoff)
      continue;
    const double r = dd.density[k] - dd.w[k] * (1.0 - integral);
    worst = std::max(worst, std::abs(r));
    peak = std::max(peak, dd.density[k]);
  }
  if (peak == 0.0)
    return 0.0;
  return worst / peak;
}

struct PovmSet::RemainderCache {
  std::once_flag once;
  Matrix value;
};

PovmSet::PovmSet(ConditionalEvolution ce, const DetectionDistribution &dd)
    : ce_(std::move(ce)), tail_(dd.tail), remainder_(std::make_shared<RemainderCache>()) {
  if (std::abs(dd.dt - ce_.dt()) > 1e-12 * ce_.dt())
    throw ValidationError("povm_set: distribution and evolution use different dt");
  weights_.reserve(dd.size() > 0 ? dd.size() - 1 : 0);
  for (std::size_t k = 1; k < dd.size(); ++k)
    weights_.push_back(dd.survival[k] / dd.dt);

  const Projector &pi = ce_.detector();
  const Index n = pi.dimension();
  const Index r = ce_.reduced_eigenvectors().cols();
  const Index m = pi.rank();
  basis_.resize(n, n);
  basis_.leftCols(r) = ce_.reduced_eigenvectors();
  basis_.rightCols(m) = pi.range_basis();
  energies_ = RealVector::Zero(n);
  energies_.head(r) = ce_.reduced_energies();
  detection_.resize(m, n);
  if (m > 0) {
    detection_.leftCols(r) = ce_.detection_map();
    detection_.rightCols(m) =
        pi.range_basis().adjoint() * (ce_.step_propagator().matrix * pi.range_basis());
  }
}

Vector PovmSet::kraus_coordinates(std::size_t k, const Vector &coords) const {
  // Rows: pi-range components; columns: basis_ coordinates.
  const double elapsed = (static_cast<double>(k) - 1.0) * ce_.dt();
  Vector phased = coords;
  for (Index i = 0; i < phased.size(); ++i)
    phased[i] *= std::exp(Complex(0.0, -energies_[i] * elapsed));
  return std::sqrt(weights_[k - 1]) * (detection_ * phased);
}

Matrix PovmSet::kraus(std::size_t k) const {
  if (k < 1 || k > size())
    throw DimensionError("PovmSet::kraus: tick index out of range");
  const Index n = basis_.rows();
  const double elapsed = (static_cast<double>(k) - 1.0) * ce_.dt();
  Vector phases(n);
  for (Index i = 0; i < n; ++i)
    phases[i] = std::exp(Complex(0.0, -energies_[i] * elapsed));
  const Matrix &range = ce_.detector().range_basis();
  return std::sqrt(weights_[k - 1]) *
         (range * (detection_ * phases.asDiagonal() * basis_.adjoint()));
}

Matrix PovmSet::effect(std::size_t k) const {
  const Matrix kr = kraus(k);
  return kr.adjoint() * kr;
}

double PovmSet::expectation(std::size_t k, const Vector &psi) const {
  if (k < 1 || k > size())
    throw DimensionError("PovmSet::expectation: tick index out of range");
  if (psi.size() != basis_.rows())
    throw DimensionError("PovmSet::expectation: dimension mismatch");
  return kraus_coordinates(k, basis_.adjoint() * psi).squaredNorm();
}

const Matrix &PovmSet::remainder() const {
  std::call_once(remainder_->once, [this] {
    const Index n = basis_.rows();
    const double dt = ce_.dt();
    // sum_k E_k dt = G (A o M) G^dagger with A = F^dagger F and
    // M_ij = sum_k w_k dt exp(i (mu_i - mu_j) s_k), accumulated in blocks.
    Matrix mixing = Matrix::Zero(n, n);
    constexpr std::size_t block = 512;
    for (std::size_t start = 0; start < size(); start += block) {
      const std::size_t stop = std::min(size(), start + block);
      Matrix b(n, static_cast<Index>(stop - start));
      for (std::size_t k = start; k < stop; ++k) {
        const double elapsed = static_cast<double>(k) * dt;
        const double amp = std::sqrt(weights_[k] * dt);
        for (Index i = 0; i < n; ++i)
          b(i, static_cast<Index>(k - start)) =
              amp * std::exp(Complex(0.0, energies_[i] * elapsed));
      }
      mixing.noalias() += b * b.adjoint();
    }
    const Matrix gram = detection_.adjoint() * detection_;
    const Matrix summed = basis_ * gram.cwiseProduct(mixing) * basis_.adjoint();
    remainder_->value = Matrix::Identity(n, n) - summed;
  });
  return remainder_->value;
}

double PovmSet::remainder_expectation(const Vector &psi) const {
  if (psi.size() != basis_.rows())
    throw DimensionError("PovmSet::remainder_expectation: dimension mismatch");
  return psi.dot(remainder() * psi).real();
}

double PovmSet::resolution(const Vector &psi) const {
  const Vector coords = basis_.adjoint() * psi;
  double sum = 0.0;
  for (std::size_t k = 1; k <= size(); ++k)
    sum += kraus_coordinates(k, coords).squaredNorm() * ce_.dt();
  return remainder_expectation(psi) + sum;
}

double PovmSet::min_effect_eigenvalue(std::size_t k) const {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(effect(k), Eigen::EigenvaluesOnly);
  return solver.eigenvalues()[0];
}

double PovmSet::effect_spectrum_bound() const {
  if (size() == 0 || detection_.rows() == 0)
    return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(detection_.adjoint() * detection_,
                                               Eigen::EigenvaluesOnly);
  const double lowest = solver.eigenvalues()[0];
  const auto [lo, hi] = std::minmax_element(weights_.begin(), weights_.end());
  return lowest * (lowest < 0.0 ? *hi : *lo);
}

PovmSet povm_set(const ConditionalEvolution &ce, const DetectionDistribution &dd) {
  return PovmSet(ce, dd);
}

} // namespace qstopwatch
