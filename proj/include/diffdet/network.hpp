#pragma once

// Network topologies, combination matrices, Perron eigenvectors and the
// matrix-power weight kernel b_{k,l}(i) = [A^i]_{k,l}.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "diffdet/errors.hpp"

namespace diffdet {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected graph on S agents. Every agent belongs to its own
/// neighborhood; self-loops passed in are ignored.
class Topology {
 public:
  Topology(std::size_t agents, std::span<const Edge> edges) : size_(agents), adj_(agents * agents, false) {
    if (agents == 0) throw InvalidArgument("topology: agent count must be positive");
    for (std::size_t k = 0; k < agents; ++k) adj_[k * agents + k] = true;
    for (const auto& [a, b] : edges) {
      if (a >= agents || b >= agents) {
        std::ostringstream os;
        os << "topology: edge (" << a << ", " << b << ") out of range for S = " << agents;
        throw InvalidArgument(os.str());
      }
      adj_[a * agents + b] = true;
      adj_[b * agents + a] = true;
    }
  }
  Topology(std::size_t agents, const std::vector<Edge>& edges)
      : Topology(agents, std::span<const Edge>(edges)) {}

  std::size_t size() const noexcept { return size_; }
  bool linked(std::size_t k, std::size_t l) const { return adj_[k * size_ + l]; }

  /// n_k = |N_k|, self included.
  std::size_t degree(std::size_t k) const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < size_; ++l) n += linked(k, l) ? 1 : 0;
    return n;
  }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> d(size_);
    for (std::size_t k = 0; k < size_; ++k) d[k] = degree(k);
    return d;
  }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t k = 0; k < size_; ++k)
      for (std::size_t l = k + 1; l < size_; ++l)
        if (linked(k, l)) out.emplace_back(k, l);
    return out;
  }

  bool connected() const {
    std::vector<bool> seen(size_, false);
    std::queue<std::size_t> frontier;
    frontier.push(0);
    seen[0] = true;
    std::size_t reached = 1;
    while (!frontier.empty()) {
      const std::size_t k = frontier.front();
      frontier.pop();
      for (std::size_t l = 0; l < size_; ++l) {
        if (linked(k, l) && !seen[l]) {
          seen[l] = true;
          ++reached;
          frontier.push(l);
        }
      }
    }
    return reached == size_;
  }

 private:
  std::size_t size_;
  std::vector<bool> adj_;
};

namespace topologies {

inline Topology path(std::size_t agents) {
  std::vector<Edge> e;
  for (std::size_t k = 0; k + 1 < agents; ++k) e.emplace_back(k, k + 1);
  return Topology(agents, e);
}

inline Topology ring(std::size_t agents) {
  std::vector<Edge> e;
  for (std::size_t k = 0; k + 1 < agents; ++k) e.emplace_back(k, k + 1);
  if (agents > 2) e.emplace_back(agents - 1, 0);
  return Topology(agents, e);
}

/// Agent 0 is the center.
inline Topology star(std::size_t agents) {
  std::vector<Edge> e;
  for (std::size_t k = 1; k < agents; ++k) e.emplace_back(0, k);
  return Topology(agents, e);
}

inline Topology full(std::size_t agents) {
  std::vector<Edge> e;
  for (std::size_t k = 0; k < agents; ++k)
    for (std::size_t l = k + 1; l < agents; ++l) e.emplace_back(k, l);
  return Topology(agents, e);
}

/// Ten-agent reference network used for the connectivity studies. Degrees
/// (self included) are {5, 3, 8, 5, 4, 6, 7, 5, 4, 3}; under Metropolis
/// weights its second eigenvalue modulus is about 0.787.
inline Topology reference() {
  static const std::vector<Edge> e = {{0, 1}, {0, 2}, {0, 6}, {0, 8}, {1, 5}, {2, 3}, {2, 4},
                                      {2, 6}, {2, 7}, {2, 8}, {2, 9}, {3, 5}, {3, 6}, {3, 9},
                                      {4, 6}, {4, 7}, {5, 6}, {5, 7}, {5, 8}, {6, 7}};
  return Topology(10, e);
}

}  // namespace topologies

/// Largest size handled by the dense eigen-decomposition.
inline constexpr Eigen::Index kDenseEigenLimit = 512;

namespace detail {

inline double dense_second_modulus(const Matrix& a) {
  if (a.rows() == 1) return 0.0;
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) throw ConvergenceError("eigenvalue decomposition failed");
  std::vector<double> moduli;
  moduli.reserve(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) moduli.push_back(std::abs(solver.eigenvalues()[i]));
  std::sort(moduli.begin(), moduli.end(), std::greater<>());
  return moduli[1];
}

inline Vector power_iterate_perron(const Matrix& a, std::size_t max_iterations) {
  const auto s = a.rows();
  Eigen::RowVectorXd p = Eigen::RowVectorXd::Constant(s, 1.0 / static_cast<double>(s));
  double best = std::numeric_limits<double>::infinity();
  std::size_t stalled = 0;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    Eigen::RowVectorXd next = p * a;
    next /= next.sum();
    const double residual = (next - p).cwiseAbs().maxCoeff();
    p = next;
    // Iterate down to the rounding floor; stop once progress stalls there.
    if (residual < best) {
      best = residual;
      stalled = 0;
    } else {
      ++stalled;
    }
    if (best <= 1e-15 || (best <= 1e-13 && stalled >= 50)) return p.transpose();
  }
  std::ostringstream os;
  os << "perron vector: power iteration did not converge in " << max_iterations
     << " iterations (residual " << best << ")";
  throw ConvergenceError(os.str());
}

inline double deflated_second_modulus(const Matrix& a, const Vector& p) {
  const auto s = a.rows();
  const Matrix deflated = a - Vector::Ones(s) * p.transpose();
  Vector x = Vector::LinSpaced(s, 1.0, 2.0);
  x.normalize();
  // Average growth rate over a long window tolerates complex or repeated
  // subdominant eigenvalues.
  constexpr int warmup = 200;
  constexpr int window = 400;
  for (int i = 0; i < warmup; ++i) {
    x = deflated * x;
    const double n = x.norm();
    if (n == 0.0) return 0.0;
    x /= n;
  }
  double log_growth = 0.0;
  for (int i = 0; i < window; ++i) {
    x = deflated * x;
    const double n = x.norm();
    if (n == 0.0) return 0.0;
    log_growth += std::log(n);
    x /= n;
  }
  return std::exp(log_growth / window);
}

}  // namespace detail

/// Modulus of the second largest eigenvalue (in magnitude) of a square
/// matrix whose leading eigenvalue is 1. Dense eigen-decomposition up to
/// S = 512; above that, power iteration on the deflated matrix A - 1 p,
/// which converges slowly when the subdominant moduli nearly coincide.
inline double second_eigenvalue_modulus(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("second eigenvalue: matrix must be square");
  if (a.rows() <= kDenseEigenLimit) return detail::dense_second_modulus(a);
  const Vector p = detail::power_iterate_perron(a, 1'000'000);
  return detail::deflated_second_modulus(a, p);
}

/// Left Perron vector p of a right-stochastic matrix: pA = p, p > 0, sum 1.
inline Vector perron_vector(const Matrix& a, std::size_t max_iterations = 1'000'000) {
  if (a.rows() != a.cols() || a.rows() == 0) throw InvalidArgument("perron vector: matrix must be square");
  const double lambda2 = second_eigenvalue_modulus(a);
  if (!(lambda2 < 1.0 - 1e-12)) {
    std::ostringstream os;
    os << "perron vector: second eigenvalue modulus " << lambda2 << " is not below 1";
    throw InvalidArgument(os.str());
  }
  Vector p = detail::power_iterate_perron(a, max_iterations);
  if ((p.array() <= 0.0).any()) throw InvalidArgument("perron vector: non-positive entry (matrix not irreducible)");
  return p;
}

/// Right-stochastic combination matrix with a validated spectral gap.
class CombinationMatrix {
 public:
  explicit CombinationMatrix(Matrix weights) : weights_(std::move(weights)) { validate(); }

  /// Also checks that weights vanish outside every neighborhood.
  CombinationMatrix(Matrix weights, const Topology& topology) : weights_(std::move(weights)) {
    if (static_cast<std::size_t>(weights_.rows()) != topology.size())
      throw InvalidArgument("combination matrix: dimension does not match topology");
    for (std::size_t k = 0; k < topology.size(); ++k)
      for (std::size_t l = 0; l < topology.size(); ++l)
        if (!topology.linked(k, l) && weights_(k, l) != 0.0) {
          std::ostringstream os;
          os << "combination matrix: a(" << k << "," << l << ") nonzero outside the neighborhood";
          throw InvalidArgument(os.str());
        }
    validate();
  }

  const Matrix& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(weights_.rows()); }
  double operator()(std::size_t k, std::size_t l) const { return weights_(k, l); }
  const Vector& perron() const noexcept { return perron_; }
  double lambda2() const noexcept { return lambda2_; }

  bool doubly_stochastic(double tol = 1e-12) const {
    return ((weights_.colwise().sum().array() - 1.0).abs() <= tol).all();
  }

 private:
  void validate() {
    if (weights_.rows() == 0 || weights_.rows() != weights_.cols())
      throw InvalidArgument("combination matrix: must be square and non-empty");
    if (!weights_.allFinite()) throw InvalidArgument("combination matrix: non-finite entry");
    if ((weights_.array() < 0.0).any()) throw InvalidArgument("combination matrix: negative entry");
    for (Eigen::Index k = 0; k < weights_.rows(); ++k) {
      if (std::abs(weights_.row(k).sum() - 1.0) > 1e-12) {
        std::ostringstream os;
        os << "combination matrix: row " << k << " sums to " << weights_.row(k).sum();
        throw InvalidArgument(os.str());
      }
    }
    lambda2_ = second_eigenvalue_modulus(weights_);
    perron_ = perron_vector(weights_);
  }

  Matrix weights_;
  Vector perron_;
  double lambda2_ = 0.0;
};

/// a_{k,l} = 1/max(n_k, n_l) for neighbors, residual on the diagonal.
inline CombinationMatrix build_metropolis(const Topology& topology) {
  if (!topology.connected()) throw InvalidArgument("metropolis: topology is not connected");
  const std::size_t s = topology.size();
  const auto deg = topology.degrees();
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
  for (std::size_t k = 0; k < s; ++k) {
    double off = 0.0;
    for (std::size_t l = 0; l < s; ++l) {
      if (l == k || !topology.linked(k, l)) continue;
      a(k, l) = 1.0 / static_cast<double>(std::max(deg[k], deg[l]));
      off += a(k, l);
    }
    a(k, k) = 1.0 - off;
  }
  return CombinationMatrix(std::move(a), topology);
}

/// a_{k,l} = 1/n_k on the neighborhood of k.
inline CombinationMatrix build_uniform_averaging(const Topology& topology) {
  if (!topology.connected()) throw InvalidArgument("uniform averaging: topology is not connected");
  const std::size_t s = topology.size();
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
  for (std::size_t k = 0; k < s; ++k) {
    const double w = 1.0 / static_cast<double>(topology.degree(k));
    for (std::size_t l = 0; l < s; ++l)
      if (topology.linked(k, l)) a(k, l) = w;
  }
  return CombinationMatrix(std::move(a), topology);
}

/// Cached powers B_i = A^i together with the limiting weights, sized for a
/// given step-size. Rows beyond the cached range equal the Perron vector to
/// working precision and are served from it.
class WeightKernel {
 public:
  static constexpr double kCollapseTol = 1e-14;

  WeightKernel(const CombinationMatrix& a, double mu, double trunc_tol = 1e-12)
      : mu_(mu), trunc_tol_(trunc_tol), perron_(a.perron()), lambda2_(a.lambda2()) {
    if (!(mu > 0.0 && mu < 1.0)) {
      std::ostringstream os;
      os << "weight kernel: step-size " << mu << " outside (0, 1)";
      throw InvalidArgument(os.str());
    }
    if (!(trunc_tol > 0.0 && trunc_tol < 1.0)) throw InvalidArgument("weight kernel: trunc_tol outside (0, 1)");
    horizon_ = static_cast<std::size_t>(std::ceil(std::log(trunc_tol) / std::log1p(-mu)));
    horizon_ = std::max<std::size_t>(horizon_, 1);

    decay_.resize(horizon_);
    for (std::size_t i = 0; i < horizon_; ++i) decay_[i] = std::pow(1.0 - mu, static_cast<double>(i));

    const auto s = static_cast<Eigen::Index>(a.size());
    const Matrix limit = Vector::Ones(s) * perron_.transpose();
    RowMatrix b = a.weights();
    for (std::size_t i = 1; i <= horizon_; ++i) {
      const double dev = (b - limit).cwiseAbs().rowwise().sum().maxCoeff();
      deviation_.push_back((b - limit).cwiseAbs().maxCoeff());
      powers_.push_back(b);
      if (dev < kCollapseTol) break;
      b = b * a.weights();
    }
    geometric_constant_ = 0.0;
    if (lambda2_ > 0.0) {
      for (std::size_t i = 0; i < deviation_.size(); ++i)
        geometric_constant_ =
            std::max(geometric_constant_, deviation_[i] / std::pow(lambda2_, static_cast<double>(i + 1)));
    }
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(perron_.size()); }
  double mu() const noexcept { return mu_; }
  double trunc_tol() const noexcept { return trunc_tol_; }
  /// N_trunc: number of terms kept in every series over i.
  std::size_t horizon() const noexcept { return horizon_; }
  /// Number of explicitly stored powers (<= horizon).
  std::size_t cached_powers() const noexcept { return powers_.size(); }
  const Vector& perron() const noexcept { return perron_; }
  double lambda2() const noexcept { return lambda2_; }
  /// C in max_{k,l} |b_{k,l}(i) - p_l| <= C lambda2^i over the cached powers.
  double geometric_constant() const noexcept { return geometric_constant_; }
  /// max_{k,l} |b_{k,l}(i) - p_l| for cached i (1-based).
  double deviation(std::size_t i) const { return deviation_.at(i - 1); }

  /// (1 - mu)^(i-1), i in [1, horizon].
  double decay(std::size_t i) const { return decay_[i - 1]; }

  /// b_{k,l}(i) for i >= 1.
  double b(std::size_t k, std::size_t l, std::size_t i) const {
    if (i <= powers_.size()) return powers_[i - 1](static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
    return perron_[static_cast<Eigen::Index>(l)];
  }

  /// Row k of B_i as a contiguous span.
  std::span<const double> row(std::size_t k, std::size_t i) const {
    const auto s = size();
    if (i <= powers_.size()) return {powers_[i - 1].data() + k * s, s};
    return {perron_.data(), s};
  }

  /// Stored power B_i (i <= cached_powers()).
  const RowMatrix& power(std::size_t i) const { return powers_.at(i - 1); }

 private:
  double mu_;
  double trunc_tol_;
  Vector perron_;
  double lambda2_;
  std::size_t horizon_ = 0;
  std::vector<double> decay_;
  std::vector<RowMatrix> powers_;
  std::vector<double> deviation_;
  double geometric_constant_ = 0.0;
};

inline WeightKernel build_weight_kernel(const CombinationMatrix& a, double mu, double trunc_tol = 1e-12) {
  return WeightKernel(a, mu, trunc_tol);
}

}  // namespace diffdet
