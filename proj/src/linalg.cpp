#include "qstopwatch/linalg.hpp"

#include <cmath>
#include <cstring>
#include <mutex>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "qstopwatch/errors.hpp"

namespace qstopwatch {

namespace detail {
struct SpectrumCache {
  std::once_flag once;
  Spectrum spectrum;
};
} // namespace detail

namespace {

// FNV-1a over raw bytes.
std::uint64_t fnv1a(const void *data, std::size_t bytes,
                    std::uint64_t seed = 1469598103934665603ULL) {
  const auto *p = static_cast<const unsigned char *>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void require_square(const Matrix &m, const char *what) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << what << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
    throw DimensionError(os.str());
  }
}

void require_same_dimension(Index a, Index b, const char *what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << a << " vs " << b << ")";
    throw DimensionError(os.str());
  }
}

Matrix selection(const std::vector<bool> &mask, bool value) {
  Index count = 0;
  for (bool m : mask)
    count += (m == value);
  Matrix s = Matrix::Zero(static_cast<Index>(mask.size()), count);
  Index col = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] == value)
      s(static_cast<Index>(i), col++) = 1.0;
  return s;
}

} // namespace

QuantumState::QuantumState(Vector amplitudes, std::string basis_label)
    : amplitudes_(std::move(amplitudes)), basis_label_(std::move(basis_label)) {
  if (amplitudes_.size() < 1)
    throw ValidationError("QuantumState: dimension must be >= 1");
  const double n = amplitudes_.norm();
  if (!(n > 0.0) || !std::isfinite(n))
    throw ValidationError("QuantumState: amplitudes must have finite nonzero norm");
  amplitudes_ /= n;
}

QuantumState QuantumState::basis_vector(Index dimension, Index which,
                                        std::string basis_label) {
  if (which < 0 || which >= dimension)
    throw DimensionError("basis_vector: index out of range");
  Vector v = Vector::Zero(dimension);
  v[which] = 1.0;
  return QuantumState(std::move(v), std::move(basis_label));
}

double hermiticity_defect(const Matrix &m) {
  if (m.size() == 0)
    return 0.0;
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

double idempotency_defect(const Matrix &m) {
  if (m.size() == 0)
    return 0.0;
  return (m * m - m).cwiseAbs().maxCoeff();
}

HermitianOperator::HermitianOperator(Matrix matrix)
    : cache_(std::make_shared<detail::SpectrumCache>()) {
  require_square(matrix, "HermitianOperator");
  if (matrix.rows() < 1)
    throw DimensionError("HermitianOperator: dimension must be >= 1");
  if (!matrix.allFinite())
    throw ValidationError("HermitianOperator: non-finite matrix entry");
  const double defect = hermiticity_defect(matrix);
  if (defect > kHermitianTolerance) {
    std::ostringstream os;
    os << "HermitianOperator: ||M - M^dagger||_max = " << defect << " exceeds "
       << kHermitianTolerance;
    throw ValidationError(os.str());
  }
  matrix_ = 0.5 * (matrix + matrix.adjoint());
}

const Spectrum &HermitianOperator::spectrum() const {
  std::call_once(cache_->once, [this] {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(matrix_);
    if (solver.info() != Eigen::Success)
      throw Error("HermitianOperator: eigendecomposition failed");
    cache_->spectrum.values = solver.eigenvalues();
    cache_->spectrum.vectors = solver.eigenvectors();
  });
  return cache_->spectrum;
}

std::uint64_t HermitianOperator::fingerprint() const {
  return fnv1a(matrix_.data(), sizeof(Complex) * static_cast<std::size_t>(matrix_.size()));
}

Projector::Projector(Matrix matrix, std::vector<bool> mask, Matrix range, Matrix kernel)
    : matrix_(std::move(matrix)), mask_(std::move(mask)), range_basis_(std::move(range)),
      kernel_basis_(std::move(kernel)) {}

Projector::Projector(Matrix matrix) {
  require_square(matrix, "Projector");
  const double herm = hermiticity_defect(matrix);
  if (herm > kHermitianTolerance) {
    std::ostringstream os;
    os << "Projector: not Hermitian (defect " << herm << ")";
    throw ValidationError(os.str());
  }
  const double idem = idempotency_defect(matrix);
  if (idem > kIdempotentTolerance) {
    std::ostringstream os;
    os << "Projector: not idempotent (||P^2 - P||_max = " << idem << ")";
    throw ValidationError(os.str());
  }
  matrix_ = 0.5 * (matrix + matrix.adjoint());

  // A projector that happens to be a 0/1 diagonal keeps the mask fast path.
  const Index n = matrix_.rows();
  bool diagonal = n > 0;
  std::vector<bool> mask(static_cast<std::size_t>(n));
  for (Index i = 0; i < n && diagonal; ++i)
    for (Index j = 0; j < n; ++j) {
      const Complex v = matrix_(i, j);
      if (i != j) {
        if (v != 0.0) {
          diagonal = false;
          break;
        }
      } else if (v == 1.0) {
        mask[static_cast<std::size_t>(i)] = true;
      } else if (v != 0.0) {
        diagonal = false;
        break;
      }
    }
  if (diagonal) {
    *this = from_mask(std::move(mask));
    return;
  }

  Eigen::SelfAdjointEigenSolver<Matrix> solver(matrix_);
  const RealVector &values = solver.eigenvalues();
  Index rank = 0;
  for (Index i = 0; i < n; ++i)
    rank += values[i] > 0.5;
  // Eigenvalues ascend: kernel first, then range.
  kernel_basis_ = solver.eigenvectors().leftCols(n - rank);
  range_basis_ = solver.eigenvectors().rightCols(rank);
}

Projector Projector::from_mask(std::vector<bool> mask) {
  const auto n = static_cast<Index>(mask.size());
  Matrix m = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    if (mask[static_cast<std::size_t>(i)])
      m(i, i) = 1.0;
  Matrix range = selection(mask, true);
  Matrix kernel = selection(mask, false);
  return Projector(std::move(m), std::move(mask), std::move(range), std::move(kernel));
}

Projector Projector::complement() const {
  if (is_diagonal()) {
    std::vector<bool> flipped(mask_.size());
    for (std::size_t i = 0; i < mask_.size(); ++i)
      flipped[i] = !mask_[i];
    return from_mask(std::move(flipped));
  }
  const Index n = dimension();
  return Projector(Matrix::Identity(n, n) - matrix_, {}, kernel_basis_, range_basis_);
}

Vector Projector::apply(const Vector &psi) const {
  require_same_dimension(dimension(), psi.size(), "Projector::apply");
  if (is_diagonal()) {
    Vector out = psi;
    for (Index i = 0; i < out.size(); ++i)
      if (!mask_[static_cast<std::size_t>(i)])
        out[i] = 0.0;
    return out;
  }
  return matrix_ * psi;
}

double Projector::expectation(const Vector &psi) const {
  require_same_dimension(dimension(), psi.size(), "Projector::expectation");
  if (is_diagonal()) {
    double s = 0.0;
    for (Index i = 0; i < psi.size(); ++i)
      if (mask_[static_cast<std::size_t>(i)])
        s += std::norm(psi[i]);
    return s;
  }
  return (range_basis_.adjoint() * psi).squaredNorm();
}

double UnitaryPropagator::unitarity_defect() const {
  const Index n = matrix.rows();
  return (matrix.adjoint() * matrix - Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
}

Projector make_projector(std::span<const Index> region, Index dimension) {
  if (dimension < 1)
    throw DimensionError("make_projector: dimension must be >= 1");
  std::vector<bool> mask(static_cast<std::size_t>(dimension), false);
  for (Index i : region) {
    if (i < 0 || i >= dimension) {
      std::ostringstream os;
      os << "make_projector: region index " << i << " outside [0, " << dimension << ")";
      throw DimensionError(os.str());
    }
    mask[static_cast<std::size_t>(i)] = true;
  }
  return Projector::from_mask(std::move(mask));
}

UnitaryPropagator propagator(const HermitianOperator &h, double t) {
  const Spectrum &s = h.spectrum();
  const Vector phases =
      (s.values.cast<Complex>() * Complex(0.0, -t)).array().exp().matrix();
  UnitaryPropagator u;
  u.matrix = s.vectors * phases.asDiagonal() * s.vectors.adjoint();
  u.time = t;
  const std::uint64_t hh = h.fingerprint();
  u.generator_hash = fnv1a(&t, sizeof t, hh);
  return u;
}

Vector evolve(const HermitianOperator &h, const Vector &psi, double t) {
  require_same_dimension(h.dimension(), psi.size(), "evolve");
  const Spectrum &s = h.spectrum();
  Vector c = s.vectors.adjoint() * psi;
  for (Index i = 0; i < c.size(); ++i)
    c[i] *= std::exp(Complex(0.0, -s.values[i] * t));
  return s.vectors * c;
}

namespace {
Collapse finish_collapse(Vector out, const QuantumState &psi) {
  const double n2 = out.squaredNorm();
  if (n2 <= kCollapseFloor) {
    std::ostringstream os;
    os << "apply_and_norm: squared norm " << n2 << " at or below collapse floor";
    throw AnnihilatedState(os.str(), n2);
  }
  return Collapse{QuantumState(std::move(out), psi.basis_label()), n2};
}
} // namespace

Collapse apply_and_norm(const Matrix &a, const QuantumState &psi) {
  require_same_dimension(a.cols(), psi.dimension(), "apply_and_norm");
  return finish_collapse(a * psi.amplitudes(), psi);
}

Collapse apply_and_norm(const Projector &a, const QuantumState &psi) {
  return finish_collapse(a.apply(psi.amplitudes()), psi);
}

Collapse apply_and_norm(const UnitaryPropagator &a, const QuantumState &psi) {
  return apply_and_norm(a.matrix, psi);
}

double energy_uncertainty(const HermitianOperator &h, const QuantumState &psi) {
  require_same_dimension(h.dimension(), psi.dimension(), "energy_uncertainty");
  const Vector &v = psi.amplitudes();
  const Vector hv = h.matrix() * v;
  const double mean = v.dot(hv).real();
  return (hv - mean * v).norm();
}

} // namespace qstopwatch
