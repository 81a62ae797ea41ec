#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "diffdet/asymptotics.hpp"

using namespace diffdet;

namespace {

const LaplaceShiftModel kLaplace(0.6);
const GaussianShiftModel kGauss(0.0, 1.0, 1.0);

template <StatModel M>
double bisect_theta(const LimitingLmgf<M>& lim, double gamma, double lo, double hi) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (lim.phi_prime(mid) < gamma ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ln P[N(m, v) > g]
double log_gauss_upper(double m, double v, double g) { return log_normal_q((g - m) / std::sqrt(v)); }

}  // namespace

TEST(SolveTheta, MatchesPlainBisection) {
  const auto a = build_uniform_averaging(topologies::reference());
  const LimitingLmgf<LaplaceShiftModel> h0(kLaplace, Hypothesis::H0, a.perron());
  const LimitingLmgf<LaplaceShiftModel> h1(kLaplace, Hypothesis::H1, a.perron());
  for (double g : {-0.1, 0.0, 0.2, 0.45}) {
    const double theta = solve_theta(TailSpec::false_alarm(g), h0);
    EXPECT_NEAR(theta, bisect_theta(h0, g, 0.0, 1e4), 1e-8 * std::max(1.0, theta)) << g;
    EXPECT_GT(theta, 0.0);
  }
  for (double g : {0.1, 0.0, -0.3}) {
    const double theta = solve_theta(TailSpec::miss(g), h1);
    EXPECT_NEAR(theta, bisect_theta(h1, g, -1e4, 0.0), 1e-8 * std::max(1.0, std::abs(theta))) << g;
    EXPECT_LT(theta, 0.0);
  }
}

TEST(SolveTheta, SymmetricHypothesesGiveMirroredRoots) {
  // psi_1(t) = psi_0(-t): the miss tail at -gamma mirrors the false alarm at gamma.
  const auto a = build_metropolis(topologies::ring(6));
  const LimitingLmgf<LaplaceShiftModel> h0(kLaplace, Hypothesis::H0, a.perron());
  const LimitingLmgf<LaplaceShiftModel> h1(kLaplace, Hypothesis::H1, a.perron());
  const double t0 = solve_theta(TailSpec::false_alarm(0.1), h0);
  const double t1 = solve_theta(TailSpec::miss(-0.1), h1);
  EXPECT_NEAR(t0, -t1, 1e-10);
}

TEST(SolveTheta, RejectsThresholdsOutsideTheDomain) {
  const auto a = build_metropolis(topologies::full(3));
  const LimitingLmgf<LaplaceShiftModel> lim(kLaplace, Hypothesis::H0, a.perron());
  EXPECT_THROW(solve_theta(TailSpec::false_alarm(0.7), lim), NoBracket);    // beyond rho
  EXPECT_THROW(solve_theta(TailSpec::false_alarm(-0.3), lim), InvalidArgument);  // below the mean
  EXPECT_THROW(solve_theta(TailSpec::miss(0.0), lim), InvalidArgument);     // hypothesis mismatch
}

TEST(RateFunction, LaplaceDoublyStochasticAtZero) {
  const auto a = build_metropolis(topologies::full(10));
  const LimitingLmgf<LaplaceShiftModel> lim(kLaplace, Hypothesis::H0, a.perron());
  const auto e = exponent_data(TailSpec::false_alarm(0.0), lim);
  // With p = 1/S, phi'(S) = S psi(1)/S = 0, so theta = S exactly.
  EXPECT_NEAR(e.theta, 10.0, 1e-9);
  EXPECT_NEAR(e.rate, 0.75, 0.02);
  EXPECT_NEAR(e.rate, -10.0 * lim.omega(1.0), 1e-12);
}

TEST(RateFunction, GaussianClosedForm) {
  const auto a = build_uniform_averaging(topologies::path(3));
  const LimitingLmgf<GaussianShiftModel> lim(kGauss, Hypothesis::H0, a.perron());
  const double sigma2_lim = lim.limiting_variance();
  for (double g : {0.1, 0.5, 2.0}) {
    const auto e = exponent_data(TailSpec::false_alarm(g), lim);
    EXPECT_NEAR(e.rate, g * g / (2.0 * sigma2_lim), 1e-10);
    EXPECT_NEAR(e.theta, g / sigma2_lim, 1e-9);
    EXPECT_NEAR(e.phi_second, sigma2_lim, 1e-12);
  }
}

TEST(RateFunction, NonnegativeConvexAndZeroAtMean) {
  const auto a = build_uniform_averaging(topologies::reference());
  const LimitingLmgf<LaplaceShiftModel> lim(kLaplace, Hypothesis::H0, a.perron());
  const double m = lim.mean();
  std::vector<double> rates;
  const double step = 0.05;
  for (double g = m + 1e-3; g < 0.55; g += step) rates.push_back(exponent_data(TailSpec::false_alarm(g), lim).rate);
  EXPECT_GE(rates.front(), 0.0);
  EXPECT_LT(rates.front(), 1e-4);
  for (std::size_t j = 1; j < rates.size(); ++j) EXPECT_GT(rates[j], rates[j - 1]);
  for (std::size_t j = 2; j < rates.size(); ++j) EXPECT_GT(rates[j] - rates[j - 1], rates[j - 1] - rates[j - 2]);
}

TEST(RateFunction, DoublyStochasticBeatsUnequalPerronAtZero) {
  // Sum p^2 > 1/S lowers the exponent.
  const auto t = topologies::reference();
  const auto ds = build_metropolis(t);
  const auto rs = build_uniform_averaging(t);
  const LimitingLmgf<LaplaceShiftModel> l_ds(kLaplace, Hypothesis::H0, ds.perron());
  const LimitingLmgf<LaplaceShiftModel> l_rs(kLaplace, Hypothesis::H0, rs.perron());
  ASSERT_GT(l_rs.perron_power_sum(2), 0.1);
  EXPECT_GT(exponent_data(TailSpec::false_alarm(0.0), l_ds).rate, exponent_data(TailSpec::false_alarm(0.0), l_rs).rate);
}

TEST(ExactAsymptotic, GaussianMatchesTrueTail) {
  const auto a = build_uniform_averaging(topologies::path(3));
  const LimitingLmgf<GaussianShiftModel> lim(kGauss, Hypothesis::H0, a.perron());
  const TailSpec tail = TailSpec::false_alarm(0.5);
  double prev = INFINITY;
  for (double mu : {0.05, 0.02, 0.01, 0.005}) {
    const WeightKernel kernel(a, mu);
    for (std::size_t k = 0; k < 3; ++k) {
      const double truth = log_gauss_upper(0.0, steady_state_variance(kGauss, Hypothesis::H0, k, kernel), 0.5);
      const double ratio = std::exp(exact_asymptotic(tail, k, kernel, lim) - truth);
      if (mu == 0.005) EXPECT_NEAR(ratio, 1.0, 0.1) << k;
      if (k == 0) {
        EXPECT_LE(std::abs(ratio - 1.0), prev * 1.05);
        prev = std::abs(ratio - 1.0);
      }
    }
  }
}

TEST(ExactAsymptotic, RefinedAddsSquaredDerivativeError) {
  const auto a = build_uniform_averaging(topologies::reference());
  const LimitingLmgf<LaplaceShiftModel> lim(kLaplace, Hypothesis::H0, a.perron());
  const WeightKernel kernel(a, 0.02);
  const auto e = exponent_data(TailSpec::false_alarm(0.1), lim);
  const auto errs = convergence_errors(e.theta, 3, kernel, lim);
  EXPECT_NEAR(correction(e.theta, 3, kernel, lim, CorrectionVariant::Refined) -
                  correction(e.theta, 3, kernel, lim, CorrectionVariant::Plain),
              errs.c2 * errs.c2 / (2.0 * e.phi_second), 1e-15);
  const double lp = exact_asymptotic(TailSpec::false_alarm(0.1), 3, kernel, lim, CorrectionVariant::Plain);
  const double lr = exact_asymptotic(TailSpec::false_alarm(0.1), 3, kernel, lim, CorrectionVariant::Refined);
  EXPECT_LE(lr, lp);
}

TEST(ExactAsymptotic, ExponentRecovery) {
  const auto a = build_metropolis(topologies::reference());
  const LimitingLmgf<LaplaceShiftModel> lim(kLaplace, Hypothesis::H0, a.perron());
  const TailSpec tail = TailSpec::false_alarm(0.0);
  const double rate = exponent_data(tail, lim).rate;
  double prev = INFINITY;
  for (double mu : {0.1, 0.05, 0.02, 0.01, 0.005}) {
    const WeightKernel kernel(a, mu);
    const double gap = std::abs(mu * exact_asymptotic(tail, 5, kernel, lim) + rate);
    EXPECT_LT(gap, prev);
    prev = gap;
  }
  EXPECT_LT(prev, 0.15 * rate);
}

TEST(NormalApproximation, GaussianExactVarianceIsExact) {
  const auto a = build_metropolis(topologies::star(5));
  const WeightKernel kernel(a, 0.01);
  const TailSpec tail = TailSpec::false_alarm(0.2);
  const double truth = log_gauss_upper(0.0, steady_state_variance(kGauss, Hypothesis::H0, 0, kernel), 0.2);
  EXPECT_NEAR(normal_approximation(tail, 0, kernel, kGauss, NormalMode::ExactVariance), truth, 1e-12);
}

TEST(NormalApproximation, VarianceRatioApproachesOne) {
  const auto a = build_metropolis(topologies::reference());
  const LimitingLmgf<LaplaceShiftModel> lim(kLaplace, Hypothesis::H0, a.perron());
  for (std::size_t k = 0; k < 10; ++k) {
    double prev = INFINITY;
    for (double mu : {0.1, 0.05, 0.02, 0.01, 0.005}) {
      const WeightKernel kernel(a, mu);
      const double ratio = steady_state_variance(kLaplace, Hypothesis::H0, k, kernel) / (mu * lim.limiting_variance());
      EXPECT_LE(std::abs(ratio - 1.0), prev * 1.05);
      prev = std::abs(ratio - 1.0);
    }
    EXPECT_LT(prev, 0.1);
  }
}

TEST(Sweep, AgentIndependentQuantitiesAreBitwiseEqual) {
  const auto a = build_metropolis(topologies::reference());
  const std::vector<double> grid = {0.05, 0.02};
  const std::vector<std::size_t> agents = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto rows = sweep(kLaplace, TailSpec::false_alarm(0.0), a, grid, agents);
  ASSERT_EQ(rows.size(), 20u);
  for (const auto& r : rows) {
    ASSERT_TRUE(r.ok()) << r.error;
    EXPECT_EQ(r.theta, rows[0].theta);
    EXPECT_EQ(r.rate, rows[0].rate);
  }
  EXPECT_EQ(rows[10].mu, 0.02);
  EXPECT_EQ(rows[13].agent, 3u);
}

TEST(Sweep, FailingCellsCarryErrorsAndNaN) {
  const auto a = build_metropolis(topologies::full(3));
  const auto rows = sweep(kLaplace, TailSpec::false_alarm(0.65), a, {0.1, 0.05}, {0, 1});
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.ok());
    EXPECT_TRUE(std::isnan(r.ln_p_asym));
    EXPECT_NE(r.error.find("solve_theta"), std::string::npos);
  }
}

TEST(Sweep, ValidatesGridAndAgents) {
  const auto a = build_metropolis(topologies::full(3));
  const auto tail = TailSpec::false_alarm(0.0);
  EXPECT_THROW(sweep(kLaplace, tail, a, {}, {0}), InvalidArgument);
  EXPECT_THROW(sweep(kLaplace, tail, a, {0.01, 0.1}, {0}), InvalidArgument);
  EXPECT_THROW(sweep(kLaplace, tail, a, {1.5}, {0}), InvalidArgument);
  EXPECT_THROW(sweep(kLaplace, tail, a, {0.1}, {3}), InvalidArgument);
}

TEST(LinearProbability, UnderflowIsReportedAsAbsent) {
  EXPECT_TRUE(linear_probability(-10.0).has_value());
  EXPECT_FALSE(linear_probability(-800.0).has_value());
}

namespace {

// Coin-flip statistic on {-1, +1}: a lattice law.
struct CoinModel {
  double psi(Hypothesis, double t) const { return std::log(std::cosh(t)); }
  double psi_prime(Hypothesis, double t) const { return std::tanh(t); }
  double psi_second(Hypothesis, double t) const { return 1.0 - std::tanh(t) * std::tanh(t); }
  double psi_third(Hypothesis, double t) const {
    const double th = std::tanh(t);
    return -2.0 * th * (1.0 - th * th);
  }
  double sample(Rng& rng, Hypothesis) const { return uniform_open(rng) < 0.5 ? -1.0 : 1.0; }
  struct Twisted {
    double p_plus;
    double operator()(Rng& rng) const { return uniform_open(rng) < p_plus ? 1.0 : -1.0; }
  };
  Twisted twisted(Hypothesis, double eta) const { return {1.0 / (1.0 + std::exp(-2.0 * eta))}; }
  double sample_twisted(Rng& rng, double eta, Hypothesis h) const { return twisted(h, eta)(rng); }
  bool is_lattice() const { return true; }
  std::string name() const { return "coin"; }
};

}  // namespace

TEST(ExactAsymptotic, LatticeModelsAreRejected) {
  static_assert(StatModel<CoinModel>);
  const auto a = build_metropolis(topologies::full(3));
  const LimitingLmgf<CoinModel> lim(CoinModel{}, Hypothesis::H0, a.perron());
  EXPECT_THROW(exponent_data(TailSpec::false_alarm(0.2), lim), LatticeModel);
  const auto rows = sweep(CoinModel{}, TailSpec::false_alarm(0.2), a, {0.1}, {0});
  EXPECT_FALSE(rows[0].ok());
}
