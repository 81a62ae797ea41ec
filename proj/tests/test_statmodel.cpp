#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "diffdet/numerics.hpp"
#include "diffdet/statmodel.hpp"

using namespace diffdet;

namespace {

constexpr double kRho = 0.6;

// Composite Simpson rule with n (even) panels.
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int j = 1; j < n; ++j) s += (j % 2 ? 4.0 : 2.0) * f(a + j * h);
  return s * h / 3.0;
}

// E_0[g(x)] for x = |d| - |d - rho|, d ~ Laplace(0, 1), integrating over d:
// the two atoms come from d < 0 and d > rho, the middle piece by Simpson.
double laplace_expectation(const std::function<double(double)>& g, double rho) {
  const double atoms = 0.5 * g(-rho) + 0.5 * std::exp(-rho) * g(rho);
  return atoms + simpson([&](double d) { return g(2.0 * d - rho) * 0.5 * std::exp(-d); }, 0.0, rho, 200000);
}

double finite_difference(const std::function<double(double)>& f, double t, double h = 1e-4) {
  return (f(t - 2 * h) - 8 * f(t - h) + 8 * f(t + h) - f(t + 2 * h)) / (12 * h);
}

}  // namespace

TEST(LaplaceModel, LmgfMatchesDirectIntegration) {
  const LaplaceShiftModel m(kRho);
  for (double t : {-3.0, -1.0, -0.2, 0.0, 0.3, 0.5, 0.77, 1.0, 2.5, 8.0}) {
    const double oracle = std::log(laplace_expectation([t](double x) { return std::exp(t * x); }, kRho));
    EXPECT_NEAR(m.psi0(t), oracle, 1e-11) << "t = " << t;
  }
}

TEST(LaplaceModel, LikelihoodRatioIdentities) {
  const LaplaceShiftModel m(kRho);
  EXPECT_NEAR(m.psi(Hypothesis::H0, 0.0), 0.0, 1e-15);
  EXPECT_NEAR(m.psi(Hypothesis::H0, 1.0), 0.0, 1e-15);  // E_0[exp(llr)] = 1
  for (double t : {-2.0, -0.4, 0.1, 0.9, 3.0}) {
    // psi_1(t) = psi_0(t + 1), and by symmetry psi_1(t) = psi_0(-t).
    EXPECT_NEAR(m.psi(Hypothesis::H1, t), m.psi0(t + 1.0), 1e-13);
    EXPECT_NEAR(m.psi(Hypothesis::H1, t), m.psi0(-t), 1e-15);
  }
}

TEST(LaplaceModel, MomentsMatchDirectIntegration) {
  const LaplaceShiftModel m(kRho);
  const double e1 = laplace_expectation([](double x) { return x; }, kRho);
  const double e2 = laplace_expectation([](double x) { return x * x; }, kRho);
  const double e3 = laplace_expectation([e1](double x) { return std::pow(x - e1, 3); }, kRho);
  EXPECT_NEAR(mean(m, Hypothesis::H0), e1, 1e-12);
  EXPECT_NEAR(variance(m, Hypothesis::H0), e2 - e1 * e1, 1e-12);
  EXPECT_NEAR(cumulant(m, Hypothesis::H0, 3), e3, 1e-12);
  EXPECT_NEAR(mean(m, Hypothesis::H0), -0.1488116, 1e-7);
  EXPECT_NEAR(variance(m, Hypothesis::H0), 0.2840346, 1e-7);
  EXPECT_NEAR(mean(m, Hypothesis::H1), -mean(m, Hypothesis::H0), 1e-15);
  EXPECT_NEAR(cumulant(m, Hypothesis::H1, 3), -cumulant(m, Hypothesis::H0, 3), 1e-15);
  EXPECT_THROW(cumulant(m, Hypothesis::H0, 4), InvalidArgument);
}

TEST(LaplaceModel, DerivativesAgreeWithFiniteDifferences) {
  const LaplaceShiftModel m(kRho);
  for (auto h : {Hypothesis::H0, Hypothesis::H1}) {
    for (double t : {-4.0, -1.1, -0.3, 0.0, 0.2, 0.5, 0.5 + 0.5 / kRho, 1.4, 5.0}) {
      auto psi = [&](double s) { return m.psi(h, s); };
      auto d1 = [&](double s) { return m.psi_prime(h, s); };
      auto d2 = [&](double s) { return m.psi_second(h, s); };
      EXPECT_NEAR(m.psi_prime(h, t), finite_difference(psi, t), 1e-9) << t;
      EXPECT_NEAR(m.psi_second(h, t), finite_difference(d1, t), 1e-9) << t;
      EXPECT_NEAR(m.psi_third(h, t), finite_difference(d2, t), 1e-8) << t;
    }
  }
}

TEST(LaplaceModel, SinchBranchesJoinSmoothly) {
  // The series and closed-form branches meet at |u| = 0.5.
  const double u = detail::kSinchSeriesCutoff;
  for (double s : {-1.0, 1.0}) {
    const auto below = detail::log_sinch(s * std::nextafter(u, 0.0));
    const auto above = detail::log_sinch(s * u);
    EXPECT_NEAR(below.value, above.value, 1e-15);
    EXPECT_NEAR(below.first, above.first, 1e-15);
    EXPECT_NEAR(below.second, above.second, 1e-14);
    EXPECT_NEAR(below.third, above.third, 1e-12);
  }
  const auto zero = detail::log_sinch(0.0);
  EXPECT_EQ(zero.value, 0.0);
  EXPECT_EQ(zero.first, 0.0);
  EXPECT_NEAR(zero.second, 1.0 / 3.0, 1e-16);
  EXPECT_EQ(zero.third, 0.0);
}

TEST(LaplaceModel, LmgfIsConvex) {
  const LaplaceShiftModel m(kRho);
  for (double t = -20.0; t <= 20.0; t += 0.37) EXPECT_GT(m.psi_second(Hypothesis::H0, t), 0.0) << t;
  // psi' is bounded by the support [-rho, rho]
  EXPECT_LT(m.psi_prime(Hypothesis::H0, 50.0), kRho);
  EXPECT_GT(m.psi_prime(Hypothesis::H0, -50.0), -kRho);
}

TEST(LaplaceModel, TwistedLawIsNormalizedAndHasTiltedMean) {
  const LaplaceShiftModel m(kRho);
  for (double eta : {-1.3, 0.0, 0.2, 0.5, 0.5 + 1e-14, 2.0}) {
    const auto tw = m.twisted(Hypothesis::H0, eta);
    // continuous part mass from the closed form
    const double a = tw.slope * kRho;
    const double cont =
        std::exp(std::log(0.5 * kRho) - 0.5 * kRho + detail::log_sinch(a).value - m.psi0(eta));
    EXPECT_NEAR(tw.p_minus + tw.p_plus + cont, 1.0, 1e-13) << eta;
    // mean of the mixture computed from its pieces
    const double cmean = kRho * detail::log_sinch(a).first;
    EXPECT_NEAR(-kRho * tw.p_minus + kRho * tw.p_plus + cont * cmean, m.psi_prime(Hypothesis::H0, eta), 1e-12)
        << eta;
  }
}

TEST(LaplaceModel, ContinuousInverseCdfIsMonotoneOnSupport) {
  const LaplaceShiftModel m(kRho);
  for (double eta : {-3.0, 0.5, 0.9, 4.0}) {
    const auto tw = m.twisted(Hypothesis::H0, eta);
    double prev = -kRho - 1e-15;
    for (double v = 1e-6; v < 1.0; v += 0.01) {
      const double x = tw.continuous(v);
      EXPECT_GE(x, prev);
      EXPECT_LE(x, kRho + 1e-15);
      prev = x;
    }
  }
}

TEST(LaplaceModel, SamplersReproduceMoments) {
  const LaplaceShiftModel m(kRho);
  Rng rng(42);
  const int n = 400000;
  for (auto h : {Hypothesis::H0, Hypothesis::H1}) {
    for (double eta : {0.0, 0.7}) {
      const auto tw = m.twisted(h, eta);
      NeumaierSum s;
      for (int j = 0; j < n; ++j) s += tw(rng);
      const double se = std::sqrt(m.psi_second(h, eta) / n);
      EXPECT_NEAR(s.value() / n, m.psi_prime(h, eta), 4 * se);
    }
    NeumaierSum s;
    for (int j = 0; j < n; ++j) s += m.sample(rng, h);
    EXPECT_NEAR(s.value() / n, mean(m, h), 4 * std::sqrt(variance(m, h) / n));
  }
}

TEST(GaussianModel, ClosedForms) {
  const GaussianShiftModel g(0.0, 1.0, 2.0);
  EXPECT_DOUBLE_EQ(g.psi(Hypothesis::H1, 0.5), 0.5 + 0.25);
  EXPECT_DOUBLE_EQ(g.psi_prime(Hypothesis::H0, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(g.psi_second(Hypothesis::H0, 7.0), 2.0);
  EXPECT_DOUBLE_EQ(g.psi_third(Hypothesis::H0, 7.0), 0.0);
  EXPECT_DOUBLE_EQ(g.twisted(Hypothesis::H0, 0.5).mean, 1.0);
  EXPECT_FALSE(g.is_lattice());
  EXPECT_THROW(GaussianShiftModel(0.0, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(LaplaceShiftModel(-1.0), InvalidArgument);
}

TEST(Rng, UniformOpenStaysInside) {
  Rng rng(3);
  for (int j = 0; j < 100000; ++j) {
    const double u = uniform_open(rng);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}
