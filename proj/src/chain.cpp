#include "qstopwatch/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qstopwatch/errors.hpp"

namespace qstopwatch {

namespace {

void check_inputs(const HermitianOperator &h, const Projector &pi, const QuantumState &psi0,
                  double dt, const char *who) {
  if (h.dimension() != pi.dimension() || h.dimension() != psi0.dimension()) {
    std::ostringstream os;
    os << who << ": H, pi and psi0 dimensions differ";
    throw DimensionError(os.str());
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    std::ostringstream os;
    os << who << ": dt must be finite and > 0";
    throw ValidationError(os.str());
  }
  const double leak = pi.apply(psi0.amplitudes()).norm();
  if (leak > kNormTolerance) {
    std::ostringstream os;
    os << who << ": initial state not in the undetected subspace (||pi psi0|| = " << leak << ")";
    throw ValidationError(os.str());
  }
}

// One tick of the chain in coordinates of the undetected subspace.
class Stepper {
public:
  Stepper(const HermitianOperator &h, const Projector &pi, const QuantumState &psi0, double dt)
      : keep_basis_(pi.kernel_basis()) {
    const Matrix u_keep = propagator(h, dt).matrix * keep_basis_;
    stay_ = keep_basis_.adjoint() * u_keep;
    leave_ = pi.range_basis().adjoint() * u_keep;
    state_ = keep_basis_.adjoint() * psi0.amplitudes();
    state_.normalize();
  }

  struct Outcome {
    double p_cond;
    bool annihilated;
  };

  Outcome advance() {
    const Vector stay = stay_ * state_;
    const double a = leave_.rows() ? (leave_ * state_).squaredNorm() : 0.0;
    const double b = stay.squaredNorm();
    const double total = a + b;
    if (b <= kCollapseFloor * total)
      return {1.0, true};
    state_ = stay / std::sqrt(b);
    return {a / total, false};
  }

  /// exp(-i H dt) applied to the current conditional state, in full coordinates.
  Vector checked_state(const HermitianOperator &h, double dt) const {
    return propagator(h, dt).matrix * (keep_basis_ * state_);
  }

  const Vector &state() const noexcept { return state_; }
  const Matrix &keep_basis() const noexcept { return keep_basis_; }

private:
  Matrix keep_basis_;
  Matrix stay_;
  Matrix leave_;
  Vector state_;
};

} // namespace

double ChainResult::total() const noexcept {
  double s = 0.0;
  for (double p : p_exact)
    s += p;
  return s;
}

double ChainResult::mean_time() const noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < p_exact.size(); ++k)
    s += times[k] * p_exact[k];
  return s;
}

ChainResult run_chain(const HermitianOperator &h, const Projector &pi, const QuantumState &psi0,
                      double dt, std::size_t steps, const ChainOptions &options) {
  check_inputs(h, pi, psi0, dt, "run_chain");
  if (steps < 1)
    throw ValidationError("run_chain: step count must be >= 1");

  Stepper stepper(h, pi, psi0, dt);

  Matrix watch;
  if (!options.watch_sites.empty()) {
    watch.resize(static_cast<Index>(options.watch_sites.size()), stepper.keep_basis().cols());
    for (std::size_t i = 0; i < options.watch_sites.size(); ++i) {
      const Index site = options.watch_sites[i];
      if (site < 0 || site >= h.dimension())
        throw DimensionError("run_chain: watch site outside the basis");
      watch.row(static_cast<Index>(i)) = stepper.keep_basis().row(site);
    }
  }

  ChainResult r;
  r.dt = dt;
  r.times.reserve(steps);
  r.p_cond.reserve(steps);
  r.p_exact.reserve(steps);
  r.survival.reserve(steps);

  double survival = 1.0;
  for (std::size_t k = 1; k <= steps; ++k) {
    const auto outcome = stepper.advance();
    const double p = std::clamp(outcome.p_cond, 0.0, 1.0);
    r.times.push_back(static_cast<double>(k) * dt);
    r.p_cond.push_back(p);
    r.p_exact.push_back(p * survival);
    survival = outcome.annihilated ? 0.0 : survival * (1.0 - p);
    r.survival.push_back(survival);
    if (watch.rows() && !outcome.annihilated)
      r.watch_max = std::max(r.watch_max, (watch * stepper.state()).squaredNorm());
    if (survival < options.survival_floor) {
      r.terminated_early = k < steps;
      break;
    }
  }
  return r;
}

QuantumState chain_state(const HermitianOperator &h, const Projector &pi,
                         const QuantumState &psi0, double dt, std::size_t k) {
  check_inputs(h, pi, psi0, dt, "chain_state");
  if (k < 1)
    throw GridError("chain_state: step index must be >= 1");
  Stepper stepper(h, pi, psi0, dt);
  for (std::size_t i = 1; i < k; ++i)
    if (stepper.advance().annihilated)
      throw AnnihilatedState("chain_state: conditional state annihilated before the requested tick",
                             0.0);
  return QuantumState(stepper.checked_state(h, dt), psi0.basis_label());
}

BranchLedger branch_ledger(const HermitianOperator &h, const Projector &pi,
                           const QuantumState &psi0, double dt, std::size_t k_max) {
  check_inputs(h, pi, psi0, dt, "branch_ledger");
  if (k_max < 1 || k_max > kMaxLedgerSteps) {
    std::ostringstream os;
    os << "branch_ledger: k_max must lie in [1, " << kMaxLedgerSteps << "], got " << k_max;
    throw ValidationError(os.str());
  }
  const Matrix &u = propagator(h, dt).matrix;
  const Projector keep = pi.complement();

  BranchLedger ledger;
  ledger.dt = dt;
  std::vector<Vector> detected;
  Vector undetected = psi0.amplitudes();
  for (std::size_t k = 1; k <= k_max; ++k) {
    for (auto &b : detected)
      b = u * b;
    const Vector moved = u * undetected;
    detected.push_back(pi.apply(moved));
    undetected = keep.apply(moved);

    std::vector<Branch> row;
    row.reserve(k + 1);
    for (std::size_t j = 0; j < detected.size(); ++j)
      row.push_back(Branch{j + 1, detected[j].squaredNorm()});
    row.push_back(Branch{std::nullopt, undetected.squaredNorm()});
    ledger.steps.push_back(std::move(row));
  }
  return ledger;
}

ZenoSweep zeno_sweep(const HermitianOperator &h, const Projector &pi, const QuantumState &psi0,
                     std::span<const double> dt_list) {
  if (dt_list.size() < 3)
    throw ValidationError("zeno_sweep: need at least three dt values");
  for (std::size_t i = 0; i < dt_list.size(); ++i) {
    if (!(dt_list[i] > 0.0) || !std::isfinite(dt_list[i]))
      throw ValidationError("zeno_sweep: dt values must be finite and > 0");
    if (i > 0 && !(dt_list[i] < dt_list[i - 1]))
      throw ValidationError("zeno_sweep: dt values must be strictly decreasing");
  }
  check_inputs(h, pi, psi0, dt_list.front(), "zeno_sweep");

  ZenoSweep z;
  const Vector hpsi = h.matrix() * psi0.amplitudes();
  z.coefficient = pi.expectation(hpsi);

  for (double dt : dt_list) {
    const double p = pi.expectation(evolve(h, psi0.amplitudes(), dt));
    if (p < 1e-300) {
      ++z.dropped;
      continue;
    }
    z.points.push_back({dt, p});
  }

  // A vanishing leading coefficient means the state does not couple to the
  // detector at second order; the power law is then meaningless.
  const double scale = hpsi.squaredNorm();
  z.degenerate = z.points.size() < 2 || z.coefficient <= 1e-24 * scale || scale == 0.0;
  if (z.degenerate) {
    z.slope = std::numeric_limits<double>::quiet_NaN();
    z.extrapolated_coefficient = 0.0;
    return z;
  }

  const auto n = static_cast<Index>(z.points.size());
  RealVector x(n), y(n), ratio(n), d(n);
  for (Index i = 0; i < n; ++i) {
    const auto &pt = z.points[static_cast<std::size_t>(i)];
    x[i] = std::log(pt.dt);
    y[i] = std::log(pt.p_first_step);
    d[i] = pt.dt;
    ratio[i] = pt.p_first_step / (pt.dt * pt.dt);
  }
  const double xm = x.mean(), ym = y.mean();
  z.slope = ((x.array() - xm) * (y.array() - ym)).sum() / (x.array() - xm).square().sum();

  const Index degree = std::min<Index>(2, n - 1);
  Eigen::MatrixXd vander(n, degree + 1);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j <= degree; ++j)
      vander(i, j) = std::pow(d[i], static_cast<double>(j));
  const RealVector fit = vander.colPivHouseholderQr().solve(ratio);
  z.extrapolated_coefficient = fit[0];
  return z;
}

} // namespace qstopwatch
