#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "diffdet/network.hpp"

using namespace diffdet;

namespace {

// |eigenvalues| of a symmetric matrix, descending.
std::vector<double> symmetric_moduli(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  std::vector<double> m;
  for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) m.push_back(std::abs(es.eigenvalues()[j]));
  std::sort(m.rbegin(), m.rend());
  return m;
}

Topology random_connected(std::size_t s, std::mt19937_64& rng) {
  std::vector<Edge> e;
  for (std::size_t k = 1; k < s; ++k) e.emplace_back(std::uniform_int_distribution<std::size_t>(0, k - 1)(rng), k);
  std::bernoulli_distribution extra(0.3);
  for (std::size_t k = 0; k < s; ++k)
    for (std::size_t l = k + 1; l < s; ++l)
      if (extra(rng)) e.emplace_back(k, l);
  return Topology(s, e);
}

}  // namespace

TEST(Topology, SelfLoopsCountInDegree) {
  const auto t = topologies::path(3);
  EXPECT_EQ(t.degrees(), (std::vector<std::size_t>{2, 3, 2}));
  EXPECT_TRUE(t.linked(1, 1));
  EXPECT_FALSE(t.linked(0, 2));
  EXPECT_TRUE(t.connected());
}

TEST(Topology, RejectsOutOfRangeEdge) {
  const std::vector<Edge> e = {{0, 3}};
  EXPECT_THROW(Topology(3, e), InvalidArgument);
}

TEST(Topology, DetectsDisconnection) {
  const std::vector<Edge> e = {{0, 1}};
  const Topology t(3, e);
  EXPECT_FALSE(t.connected());
  EXPECT_THROW(build_metropolis(t), InvalidArgument);
}

TEST(Topology, ReferenceHasDistinctDegreeClasses) {
  const auto t = topologies::reference();
  EXPECT_EQ(t.degrees(), (std::vector<std::size_t>{5, 3, 8, 5, 4, 6, 7, 5, 4, 3}));
  EXPECT_TRUE(t.connected());
}

TEST(CombinationMatrix, MetropolisIsDoublyStochasticWithUniformPerron) {
  for (const auto& t : {topologies::ring(7), topologies::star(5), topologies::reference(), topologies::path(4)}) {
    const auto a = build_metropolis(t);
    EXPECT_TRUE(a.doubly_stochastic());
    for (Eigen::Index l = 0; l < a.perron().size(); ++l) EXPECT_NEAR(a.perron()[l], 1.0 / t.size(), 1e-14);
  }
}

TEST(CombinationMatrix, UniformAveragingPerronFollowsDegrees) {
  const auto a = build_uniform_averaging(topologies::path(3));
  EXPECT_NEAR(a.perron()[0], 2.0 / 7.0, 1e-14);
  EXPECT_NEAR(a.perron()[1], 3.0 / 7.0, 1e-14);
  EXPECT_NEAR(a.perron()[2], 2.0 / 7.0, 1e-14);
  EXPECT_FALSE(a.doubly_stochastic());
}

TEST(CombinationMatrix, PerronIsLeftFixedPointOnRandomGraphs) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_connected(3 + trial % 9, rng);
    for (const auto& a : {build_metropolis(t), build_uniform_averaging(t)}) {
      const Vector& p = a.perron();
      EXPECT_NEAR(p.sum(), 1.0, 1e-13);
      EXPECT_TRUE((p.array() > 0.0).all());
      EXPECT_LT((a.weights().transpose() * p - p).cwiseAbs().maxCoeff(), 1e-13);
      // degree formula for uniform averaging
      if (!a.doubly_stochastic())
        for (std::size_t l = 0; l < t.size(); ++l) {
          double total = 0.0;
          for (auto d : t.degrees()) total += static_cast<double>(d);
          EXPECT_NEAR(p[static_cast<Eigen::Index>(l)], t.degree(l) / total, 1e-13);
        }
    }
  }
}

TEST(CombinationMatrix, SecondEigenvalueMatchesSymmetricEigensolver) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_connected(3 + trial % 12, rng);
    const auto a = build_metropolis(t);
    EXPECT_NEAR(a.lambda2(), symmetric_moduli(a.weights())[1], 1e-10);
  }
}

TEST(CombinationMatrix, RingSpectrumClosedForm) {
  // Metropolis on a ring: weights 1/3, eigenvalues (1 + 2 cos(2 pi j / S)) / 3.
  for (std::size_t s : {5u, 12u, 80u}) {
    const auto a = build_metropolis(topologies::ring(s));
    double expected = 0.0;
    for (std::size_t j = 1; j < s; ++j)
      expected = std::max(expected, std::abs(1.0 + 2.0 * std::cos(2.0 * std::numbers::pi * j / s)) / 3.0);
    EXPECT_NEAR(a.lambda2(), expected, 1e-12) << "S = " << s;
  }
}

TEST(CombinationMatrix, DeflatedPowerIterationFallback) {
  // Used above the dense limit. Nearly equal subdominant moduli slow it down,
  // so the tolerance is loose on the ring and tight on a well-separated star.
  const auto ring = build_metropolis(topologies::ring(80));
  EXPECT_NEAR(detail::deflated_second_modulus(ring.weights(), ring.perron()), ring.lambda2(), 1e-4);
  const auto star = build_uniform_averaging(topologies::star(40));
  EXPECT_NEAR(detail::deflated_second_modulus(star.weights(), star.perron()), star.lambda2(), 1e-10);
}

TEST(CombinationMatrix, FullGraphHasNoSecondMode) {
  const auto a = build_metropolis(topologies::full(6));
  EXPECT_NEAR(a.lambda2(), 0.0, 1e-12);
}

TEST(CombinationMatrix, ValidatesInput) {
  Matrix bad(2, 2);
  bad << 0.5, 0.6, 0.5, 0.5;
  EXPECT_THROW(CombinationMatrix{bad}, InvalidArgument);
  bad << 1.2, -0.2, 0.5, 0.5;
  EXPECT_THROW(CombinationMatrix{bad}, InvalidArgument);
  EXPECT_THROW(CombinationMatrix{Matrix(2, 3)}, InvalidArgument);
  // support violation
  Matrix full3 = Matrix::Constant(3, 3, 1.0 / 3.0);
  EXPECT_THROW(CombinationMatrix(full3, topologies::path(3)), InvalidArgument);
  // periodic: eigenvalue -1
  Matrix swap(2, 2);
  swap << 0.0, 1.0, 1.0, 0.0;
  EXPECT_THROW(CombinationMatrix{swap}, InvalidArgument);
}

TEST(WeightKernel, PowersMatchRepeatedProducts) {
  const auto a = build_uniform_averaging(topologies::reference());
  const WeightKernel kernel(a, 0.05);
  Matrix b = a.weights();
  for (std::size_t i = 1; i <= 40; ++i) {
    for (std::size_t k = 0; k < a.size(); ++k)
      for (std::size_t l = 0; l < a.size(); ++l)
        EXPECT_NEAR(kernel.b(k, l, i), b(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)), 1e-14);
    b = b * a.weights();
  }
}

TEST(WeightKernel, RowsAreProbabilityVectorsAndCollapseToPerron) {
  const auto a = build_metropolis(topologies::reference());
  const WeightKernel kernel(a, 0.01);
  EXPECT_LT(kernel.cached_powers(), kernel.horizon());
  for (std::size_t i : {std::size_t{1}, std::size_t{7}, kernel.cached_powers(), kernel.horizon()}) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      double sum = 0.0;
      for (double v : kernel.row(k, i)) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-13);
    }
  }
  for (std::size_t l = 0; l < a.size(); ++l)
    EXPECT_NEAR(kernel.b(3, l, kernel.cached_powers()), a.perron()[static_cast<Eigen::Index>(l)], 1e-14);
}

TEST(WeightKernel, GeometricDeviationBound) {
  const auto a = build_metropolis(topologies::reference());
  const WeightKernel kernel(a, 0.02);
  const double c = kernel.geometric_constant();
  EXPECT_GT(c, 0.0);
  for (std::size_t i = 1; i <= kernel.cached_powers(); ++i)
    EXPECT_LE(kernel.deviation(i), c * std::pow(kernel.lambda2(), static_cast<double>(i)) * (1 + 1e-12));
}

TEST(WeightKernel, HorizonCoversTruncationTolerance) {
  const auto a = build_metropolis(topologies::ring(5));
  for (double mu : {0.1, 0.01, 0.001}) {
    const WeightKernel kernel(a, mu, 1e-12);
    const double n = static_cast<double>(kernel.horizon());
    EXPECT_LE(std::pow(1.0 - mu, n), 1e-12);
    EXPECT_GT(std::pow(1.0 - mu, n - 1.0), 1e-12);
    EXPECT_DOUBLE_EQ(kernel.decay(1), 1.0);
  }
  EXPECT_THROW(WeightKernel(a, 0.0), InvalidArgument);
  EXPECT_THROW(WeightKernel(a, 1.0), InvalidArgument);
}
