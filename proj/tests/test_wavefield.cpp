#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vortexline/wavefield.hpp"

using namespace vortexline;

TEST(Hermite, MatchesExplicitSum) {
  for (int n = 0; n <= 12; ++n)
    for (double xi : {-3.1, -1.0, -0.2, 0.0, 0.7, 2.5}) {
      const double ref = oracle::hermite(n, xi);
      EXPECT_NEAR(hermite_eval(n, xi).h, ref, 1e-12 * std::max(1.0, std::abs(ref))) << n << " " << xi;
    }
}

TEST(Hermite, DerivativesFromLoweringIdentity) {
  const double h = 1e-5;
  for (int n = 0; n <= 8; ++n) {
    const double xi = 0.37;
    const auto v = hermite_eval(n, xi);
    const double d = (oracle::hermite(n, xi + h) - oracle::hermite(n, xi - h)) / (2 * h);
    const double d2 = (oracle::hermite(n, xi + h) - 2 * oracle::hermite(n, xi) + oracle::hermite(n, xi - h)) / (h * h);
    EXPECT_NEAR(v.dh, d, 1e-6 * std::max(1.0, std::abs(d)));
    EXPECT_NEAR(v.d2h, d2, 1e-3 * std::max(1.0, std::abs(d2)));
  }
  EXPECT_THROW(hermite_eval(-1, 0.0), Error);
}

TEST(Eigenstate, MatchesProductOfOneDimensionalStates) {
  const Vec3 w(0.8, 1.3, 2.1);
  const WavefunctionSpec spec({{1.0, {0, 0, 0}}}, w);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (QuantumNumbers q : {QuantumNumbers{0, 0, 0}, {1, 0, 2}, {3, 1, 0}, {2, 4, 5}}) {
    for (int k = 0; k < 20; ++k) {
      const Vec3 x(u(rng), u(rng), u(rng));
      const double ref = oracle::eigen1d(q.n1, w[0], x[0]) * oracle::eigen1d(q.n2, w[1], x[1]) *
                         oracle::eigen1d(q.n3, w[2], x[2]);
      const auto full = eval_eigenstate(spec, q, x, Basis::full);
      const auto poly = eval_eigenstate(spec, q, x, Basis::polynomial);
      EXPECT_NEAR(full.value, ref, 1e-13);
      EXPECT_NEAR(poly.value * std::exp(spec.log_envelope(x)), ref, 1e-13);
    }
  }
}

TEST(Field, SuperpositionMatchesOracle) {
  const auto spec = demo_superposition();
  const auto ref = oracle::demo(demo_omega());
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2.5, 2.5), tt(0.0, 10.0);
  for (int k = 0; k < 200; ++k) {
    const Vec3 x(u(rng), u(rng), u(rng));
    const double t = tt(rng);
    EXPECT_LT(std::abs(eval_field(spec, x, t).psi - ref.psi(x, t)), 1e-13);
  }
}

TEST(Field, EnvelopeFactorisation) {
  const auto spec = demo_superposition();
  const Vec3 x(0.4, -1.2, 0.9);
  const auto full = eval_field(spec, x, 1.7, Basis::full);
  const auto poly = eval_polynomial_part(spec, x, 1.7);
  const double e = std::exp(spec.log_envelope(x));
  EXPECT_LT(std::abs(full.psi - e * poly.psi), 1e-14);
  // grad Psi = e (grad phi + phi grad sigma)
  const CVec3 g = e * (poly.grad + poly.psi * spec.log_envelope_gradient(x).cast<Complex>());
  EXPECT_LT((full.grad - g).norm(), 1e-13);
}

TEST(Field, InvalidSpecsRejected) {
  EXPECT_THROW(WavefunctionSpec({}, Vec3(1, 1, 1)), Error);
  EXPECT_THROW(WavefunctionSpec({{1.0, {0, 0, 0}}}, Vec3(1, -1, 1)), Error);
  EXPECT_THROW(WavefunctionSpec({{0.0, {0, 0, 0}}}, Vec3(1, 1, 1)), Error);
  EXPECT_THROW(WavefunctionSpec({{1.0, {-1, 0, 0}}}, Vec3(1, 1, 1)), Error);
}

TEST(Field, ScaleIsPositiveAndTimeIndependentForOneMode) {
  const WavefunctionSpec one({{1.0, {1, 0, 0}}}, demo_omega());
  EXPECT_GT(field_scale(one, 0.0), 0.0);
  EXPECT_NEAR(field_scale(one, 0.0), field_scale(one, 3.3), 1e-15);
}
