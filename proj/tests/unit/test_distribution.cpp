#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "qstopwatch/conditional.hpp"
#include "qstopwatch/distribution.hpp"
#include "qstopwatch/errors.hpp"
#include "qstopwatch/scenarios.hpp"

using namespace qstopwatch;

namespace {

HazardSeries constant(double w, double dt, std::size_t steps) {
  return HazardSeries::from_function([w](double) { return w; }, dt, steps);
}

HazardSeries rectangular(double traversal, double dt, std::size_t steps) {
  const auto oracle = classical_packet_oracle(traversal);
  return HazardSeries::from_function([&](double t) { return oracle.hazard(t); }, dt, steps);
}

} // namespace

TEST_CASE("zero hazard") {
  const DetectionDistribution dd = build_distribution(constant(0.0, 0.1, 100), 10.0);
  REQUIRE(dd.size() == 101);
  for (std::size_t k = 0; k < dd.size(); ++k) {
    CHECK(dd.density[k] == 0.0);
    CHECK(dd.survival[k] == 1.0);
  }
  CHECK(dd.total == 0.0);
  CHECK(dd.tail == 1.0);
  CHECK(total_probability(dd).total == 0.0);
  CHECK_FALSE(mean_detection_time(dd).conditional_mean.has_value());
  CHECK(integral_equation_residual(dd) == 0.0);
}

TEST_CASE("constant hazard gives the exponential law") {
  const DetectionDistribution dd = build_distribution(constant(1.0, 0.01, 2000), 20.0);
  CHECK(std::abs(dd.total - (1.0 - std::exp(-20.0))) < 1e-14);
  for (std::size_t k = 0; k < dd.size(); ++k)
    CHECK(std::abs(dd.density[k] - std::exp(-dd.times[k])) < 1e-13);
  CHECK(std::abs(dd.total + dd.tail - 1.0) < 1e-6);
  CHECK(std::abs(dd.integrated_total - dd.total) < 1e-4);
}

TEST_CASE("total probability closed forms") {
  const DetectionDistribution half = build_distribution(constant(std::log(2.0), 0.01, 100), 1.0);
  CHECK(std::abs(total_probability(half).total - 0.5) < 1e-14);
  CHECK_FALSE(total_probability(half).certain_within_horizon);

  const DetectionDistribution roulette = build_distribution(constant(1.0 / 37.0, 1.0, 1500), 1500);
  CHECK(total_probability(roulette).total > 1.0 - 1e-15);
  CHECK(total_probability(roulette).certain_within_horizon);
}

TEST_CASE("mean detection time closed forms") {
  const MeanDetectionTime unit = mean_detection_time(build_distribution(constant(1.0, 1e-3, 50000), 50.0));
  CHECK(std::abs(unit.mean - 1.0) < 1e-6);
  REQUIRE(unit.conditional_mean.has_value());
  CHECK(std::abs(*unit.conditional_mean - 1.0) < 1e-6);

  const MeanDetectionTime roulette =
      mean_detection_time(build_distribution(constant(1.0 / 37.0, 1.0, 1500), 1500.0));
  CHECK(std::abs(roulette.mean - 37.0) < 0.1);
  CHECK(roulette.tail < 1e-15);

  const MeanDetectionTime uniform = mean_detection_time(build_distribution(rectangular(1.0, 1e-4, 9999), 0.9999));
  CHECK(std::abs(uniform.mean - 0.5) < 1e-3);
}

TEST_CASE("rectangular packet reproduces the uniform density") {
  const DetectionDistribution dd = build_distribution(rectangular(1.0, 1e-4, 9999), 0.9999);
  double worst = 0.0;
  for (std::size_t k = 0; k < dd.size(); ++k)
    if (dd.times[k] > 0.01 && dd.times[k] < 0.99)
      worst = std::max(worst, std::abs(dd.density[k] - 1.0));
  CHECK(worst < 1e-3);
  CHECK(integral_equation_residual(dd, 0.01) <= 1e-3);
}

TEST_CASE("classical packet oracle") {
  const ClassicalPacketOracle o = classical_packet_oracle(1.0);
  CHECK(o.hazard(0.5) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(o.cumulative_hazard(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(o.density(0.5) == 1.0);
  CHECK(o.density(-0.1) == 0.0);
  CHECK(o.density(1.5) == 0.0);
  CHECK_THROWS_AS(o.hazard(1.0), DomainError);
  CHECK_THROWS_AS(o.cumulative_hazard(1.2), DomainError);
  CHECK_THROWS_AS(classical_packet_oracle(0.0), ValidationError);
}

TEST_CASE("invalid hazards and short series are rejected") {
  CHECK_THROWS_AS(build_distribution(constant(-1.0, 0.1, 10), 1.0), ValidationError);
  CHECK_THROWS_AS(build_distribution(constant(std::nan(""), 0.1, 10), 1.0), ValidationError);
  CHECK_THROWS_AS(build_distribution(constant(1.0, 0.1, 10), 2.0), ValidationError);
  CHECK_THROWS_AS(build_distribution(constant(1.0, 0.1, 10), 0.05), ValidationError);
}

TEST_CASE("hazard is capped once survival is negligible") {
  auto growing = HazardSeries::from_function([](double t) { return t; }, 0.01, 2000);
  const DetectionDistribution dd = build_distribution(growing, 20.0);
  CHECK(dd.has_capped_region);
  double cap = 0.0;
  for (std::size_t k = 1; k < dd.size(); ++k) {
    if (dd.capped[k]) {
      CHECK(dd.survival[k - 1] < kCapSurvival);
      CHECK(dd.w[k] <= cap);
    } else {
      cap = dd.w[k];
      CHECK(dd.w[k] == doctest::Approx(dd.times[k]));
    }
  }
}

TEST_CASE("distribution invariants on random hazards") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> w(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> samples(501);
    for (double &s : samples)
      s = w(rng);
    HazardSeries hs;
    hs.dt = 0.02;
    hs.w_initial = samples[0];
    for (std::size_t k = 1; k < samples.size(); ++k) {
      hs.times.push_back(k * hs.dt);
      hs.w.push_back(samples[k]);
      hs.p.push_back(samples[k] * hs.dt);
    }
    double previous_total = 0.0;
    for (double t_max : {1.0, 3.0, 10.0}) {
      const DetectionDistribution dd = build_distribution(hs, t_max);
      CHECK(dd.u[0] == 0.0);
      for (std::size_t k = 1; k < dd.size(); ++k)
        CHECK(dd.u[k] >= dd.u[k - 1]);
      for (std::size_t k = 0; k < dd.size(); ++k) {
        CHECK(dd.density[k] >= 0.0);
        if (dd.survival[k] > 1e-12 && dd.w[k] > 0.0)
          CHECK(std::abs(dd.density[k] / dd.survival[k] - dd.w[k]) <= 1e-10 * dd.w[k]);
      }
      CHECK(dd.total >= 0.0);
      CHECK(dd.total <= 1.0);
      CHECK(dd.total >= previous_total);
      previous_total = dd.total;
    }
  }
}

TEST_CASE("integral equation residual for constant hazard") {
  const DetectionDistribution dd = build_distribution(constant(1.0, 1e-3, 10000), 10.0);
  CHECK(integral_equation_residual(dd) <= 1e-6);
}

TEST_CASE("povm on the two-level model") {
  const double dt = 0.1;
  const Scenario s = build_two_level_decay(1.0, dt);
  const ConditionalEvolution ce(s.hamiltonian, s.detector, s.initial, dt);
  const DetectionDistribution dd = build_distribution(ce.hazard_series(400), 40.0);
  const PovmSet povm = povm_set(ce, dd);
  REQUIRE(povm.size() == 400);
  const Vector &psi = s.initial.amplitudes();
  for (std::size_t k = 1; k <= povm.size(); ++k)
    CHECK(std::abs(povm.expectation(k, psi) * dt - dd.density[k] * dt) <= 1e-8);
  CHECK(std::abs(povm.resolution(psi) - 1.0) <= 1e-6);
  CHECK(povm.remainder_expectation(psi) >= -1e-8);
  for (std::size_t k : {std::size_t{1}, std::size_t{57}, std::size_t{400}})
    CHECK(povm.min_effect_eigenvalue(k) >= -1e-10);
  CHECK(povm.effect_spectrum_bound() >= -1e-10);
  CHECK_THROWS_AS(povm.kraus(0), DimensionError);
  CHECK_THROWS_AS(povm.kraus(401), DimensionError);
}

TEST_CASE("povm with a silent detector") {
  Matrix d = Matrix::Zero(3, 3);
  d(0, 0) = 0.5;
  d(0, 1) = d(1, 0) = 0.3;
  d(2, 2) = 2.0;
  const std::vector<Index> region{2};
  Vector psi(3);
  psi << 1.0, 0.0, 0.0;
  const ConditionalEvolution ce(HermitianOperator(d), make_projector(region, 3), QuantumState(psi), 0.2);
  const DetectionDistribution dd = build_distribution(ce.hazard_series(50), 10.0);
  const PovmSet povm(ce, dd);
  for (std::size_t k = 1; k <= povm.size(); ++k)
    CHECK(povm.expectation(k, psi) < 1e-28);
  CHECK(std::abs(povm.remainder_expectation(psi) - 1.0) < 1e-12);
}

TEST_CASE("kraus operators and remainder match a literal construction") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 6; ++trial) {
    const Index n = 3 + trial;
    const Matrix m = oracle::random_hermitian(rng, n);
    Matrix p;
    std::vector<Index> region;
    if (trial % 2) {
      p = oracle::random_dense_projector(rng, n, 1 + trial % 3);
    } else {
      region = oracle::random_region(rng, n);
      p = make_projector(region, n).matrix();
    }
    const Matrix keep = Matrix::Identity(n, n) - p;
    Vector psi = keep * oracle::random_state_outside(rng, n, region);
    psi.normalize();
    const double dt = 0.1;
    const std::size_t steps = 60;
    const ConditionalEvolution ce(HermitianOperator(m), Projector(p), QuantumState(psi), dt);
    const DetectionDistribution dd = build_distribution(ce.hazard_series(steps), steps * dt);
    const PovmSet povm(ce, dd);

    const Matrix u = oracle::taylor_propagator(m, dt);
    const Matrix hbar = keep * m * keep;
    Matrix summed = Matrix::Zero(n, n);
    for (std::size_t k = 1; k <= steps; ++k) {
      const Matrix free = oracle::taylor_propagator(hbar, (k - 1.0) * dt);
      const Matrix kr = std::exp(-0.5 * dd.u[k]) / std::sqrt(dt) * p * u * free;
      CHECK(oracle::max_abs(povm.kraus(k) - kr) <= 1e-10);
      const Matrix e = kr.adjoint() * kr;
      summed += e * dt;
      if (k % 20 == 1) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(e, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues()[0] >= povm.effect_spectrum_bound() - 1e-12);
        CHECK(povm.min_effect_eigenvalue(k) >= -1e-10);
      }
    }
    CHECK(oracle::max_abs(povm.remainder() - (Matrix::Identity(n, n) - summed)) <= 1e-10);
    CHECK(std::abs(povm.resolution(psi) - 1.0) <= 1e-10);
  }
}
