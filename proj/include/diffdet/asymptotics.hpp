#pragma once

// Exact asymptotics of the steady-state error probabilities:
//
//   P_{k,mu}(gamma) = sqrt(mu / (2 pi theta^2 phi''(theta)))
//                     * exp(-[Phi(gamma) + eps_{k,mu}(theta)] / mu)
//
// with theta the root of phi'(theta) = gamma and Phi the Fenchel-Legendre
// transform of phi. Normal approximations are provided for comparison.
// Everything is carried as natural logarithms.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "diffdet/errors.hpp"
#include "diffdet/lmgf.hpp"
#include "diffdet/network.hpp"
#include "diffdet/numerics.hpp"
#include "diffdet/statmodel.hpp"

namespace diffdet {

enum class TailDirection { Upper, Lower };

/// UPPER: P[y* > gamma] with gamma above the mean; LOWER: P[y* <= gamma]
/// with gamma below it.
struct TailSpec {
  double gamma;
  TailDirection direction;
  Hypothesis hypothesis;

  /// Type-I error alpha = P_0[y* > gamma].
  static TailSpec false_alarm(double gamma) { return {gamma, TailDirection::Upper, Hypothesis::H0}; }
  /// Type-II error beta = P_1[y* <= gamma].
  static TailSpec miss(double gamma) { return {gamma, TailDirection::Lower, Hypothesis::H1}; }

  double sign() const noexcept { return direction == TailDirection::Upper ? 1.0 : -1.0; }

  void validate(double mean) const {
    if (!std::isfinite(gamma)) throw InvalidArgument("tail: threshold must be finite");
    const bool ok = direction == TailDirection::Upper ? gamma > mean : gamma < mean;
    if (!ok) {
      std::ostringstream os;
      os << "tail: threshold " << gamma << " must lie strictly "
         << (direction == TailDirection::Upper ? "above" : "below") << " the mean " << mean << " under "
         << to_string(hypothesis);
      throw InvalidArgument(os.str());
    }
  }
};

enum class CorrectionVariant { Plain, Refined };
enum class NormalMode { CltLimit, ExactVariance };

/// Unique root of phi'(theta) = gamma. Brackets by doubling |t| from 1e-3
/// up to 1e6 on the side dictated by the tail, then runs Newton steps
/// safeguarded by bisection.
template <StatModel M>
double solve_theta(const TailSpec& tail, const LimitingLmgf<M>& limiting) {
  if (tail.hypothesis != limiting.hypothesis()) throw InvalidArgument("solve_theta: hypothesis mismatch");
  tail.validate(limiting.mean());
  const double gamma = tail.gamma;
  const double s = tail.sign();
  auto f = [&](double t) { return limiting.phi_prime(t) - gamma; };

  // phi' is increasing: f(0) has sign -s, search for the sign change.
  double inner = 0.0;
  double outer = s * 1e-3;
  while (s * f(outer) < 0.0) {
    inner = outer;
    outer *= 2.0;
    if (std::abs(outer) > 1e6) {
      std::ostringstream os;
      os << "solve_theta: phi' saturates before reaching " << gamma
         << "; threshold lies outside the interior of the rate-function domain";
      throw NoBracket(os.str());
    }
  }
  double lo = std::min(inner, outer);
  double hi = std::max(inner, outer);
  const double tol = 1e-12 * std::max(1.0, std::abs(gamma));
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double fx = f(x);
    if (std::abs(fx) <= tol) return x;
    if (fx < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double slope = limiting.phi_second(x);
    double next = x - fx / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (next == x) break;
    x = next;
  }
  const double fx = f(x);
  if (std::abs(fx) <= tol) return x;
  std::ostringstream os;
  os << "solve_theta: no convergence, residual " << fx << " at theta = " << x;
  throw ConvergenceError(os.str());
}

/// Phi(gamma) = gamma theta - phi(theta), theta the stationary point.
template <StatModel M>
double rate_function(double gamma, double theta, const LimitingLmgf<M>& limiting) {
  return gamma * theta - limiting.phi(theta);
}

/// eps_{k,mu}(theta): PLAIN is C1, REFINED adds C2^2 / (2 phi''(theta)).
template <StatModel M>
double correction(double theta, std::size_t k, const WeightKernel& kernel, const LimitingLmgf<M>& limiting,
                  CorrectionVariant variant) {
  const auto errs = convergence_errors(theta, k, kernel, limiting);
  if (variant == CorrectionVariant::Plain) return errs.c1;
  return errs.c1 + errs.c2 * errs.c2 / (2.0 * limiting.phi_second(theta));
}

/// Agent-independent part of the exact asymptotics for one tail.
struct ExponentData {
  double theta;
  double rate;
  double phi_second;
};

template <StatModel M>
ExponentData exponent_data(const TailSpec& tail, const LimitingLmgf<M>& limiting) {
  if (limiting.model().is_lattice())
    throw LatticeModel("exact asymptotics are not available for lattice local statistics");
  const double theta = solve_theta(tail, limiting);
  return {theta, rate_function(tail.gamma, theta, limiting), limiting.phi_second(theta)};
}

/// ln P_{k,mu}(gamma) given the correction eps.
inline double log_exact_asymptotic(const ExponentData& e, double mu, double eps) {
  return 0.5 * std::log(mu / (2.0 * std::numbers::pi * e.theta * e.theta * e.phi_second)) - (e.rate + eps) / mu;
}

/// ln P_{k,mu}(gamma) for agent k; the kernel fixes mu.
template <StatModel M>
double exact_asymptotic(const TailSpec& tail, std::size_t k, const WeightKernel& kernel,
                        const LimitingLmgf<M>& limiting, CorrectionVariant variant = CorrectionVariant::Refined) {
  const ExponentData e = exponent_data(tail, limiting);
  return log_exact_asymptotic(e, kernel.mu(), correction(e.theta, k, kernel, limiting, variant));
}

/// ln of the Gaussian tail with the mean E[x] and either the limiting
/// variance mu sigma_lim^2 or the actual (truncated) VAR[y*_{k,mu}].
template <StatModel M>
double normal_approximation(const TailSpec& tail, std::size_t k, const WeightKernel& kernel, const M& model,
                            NormalMode mode) {
  const Hypothesis h = tail.hypothesis;
  const double m = mean(model, h);
  tail.validate(m);
  double var;
  if (mode == NormalMode::CltLimit) {
    NeumaierSum p2;
    for (Eigen::Index l = 0; l < kernel.perron().size(); ++l) p2 += kernel.perron()[l] * kernel.perron()[l];
    var = kernel.mu() * 0.5 * variance(model, h) * p2.value();
  } else {
    var = steady_state_variance(model, h, k, kernel);
  }
  return log_normal_q(tail.sign() * (tail.gamma - m) / std::sqrt(var));
}

/// Probabilities below this are reported only in log form.
inline constexpr double kSmallestLinearProbability = 1e-300;

inline std::optional<double> linear_probability(double log_p) {
  const double p = std::exp(log_p);
  if (p > kSmallestLinearProbability) return p;
  return std::nullopt;
}

struct AsymptoticReport {
  double mu = 0.0;
  std::size_t agent = 0;
  double theta = std::numeric_limits<double>::quiet_NaN();
  double rate = std::numeric_limits<double>::quiet_NaN();
  double phi_second = std::numeric_limits<double>::quiet_NaN();
  double eps_plain = std::numeric_limits<double>::quiet_NaN();
  double eps_refined = std::numeric_limits<double>::quiet_NaN();
  double ln_p_asym = std::numeric_limits<double>::quiet_NaN();  // with the selected variant
  double ln_p_normal_clt = std::numeric_limits<double>::quiet_NaN();
  double ln_p_normal_exactvar = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty when the cell succeeded

  bool ok() const noexcept { return error.empty(); }
};

struct SweepOptions {
  double trunc_tol = 1e-12;
  CorrectionVariant variant = CorrectionVariant::Refined;
};

inline void validate_mu_grid(const std::vector<double>& mu_grid) {
  if (mu_grid.empty()) throw InvalidArgument("mu_grid: must not be empty");
  for (std::size_t j = 0; j < mu_grid.size(); ++j) {
    if (!(mu_grid[j] > 0.0 && mu_grid[j] < 1.0)) throw InvalidArgument("mu_grid: values must lie in (0, 1)");
    if (j > 0 && !(mu_grid[j] < mu_grid[j - 1])) throw InvalidArgument("mu_grid: must be strictly descending");
  }
}

/// Full report for one (mu, agent) cell given a prepared kernel.
template <StatModel M>
AsymptoticReport asymptotic_report(const TailSpec& tail, std::size_t k, const WeightKernel& kernel,
                                   const LimitingLmgf<M>& limiting, const ExponentData& e,
                                   CorrectionVariant variant) {
  AsymptoticReport r;
  r.mu = kernel.mu();
  r.agent = k;
  r.theta = e.theta;
  r.rate = e.rate;
  r.phi_second = e.phi_second;
  const auto errs = convergence_errors(e.theta, k, kernel, limiting);
  r.eps_plain = errs.c1;
  r.eps_refined = errs.c1 + errs.c2 * errs.c2 / (2.0 * e.phi_second);
  r.ln_p_asym =
      log_exact_asymptotic(e, r.mu, variant == CorrectionVariant::Refined ? r.eps_refined : r.eps_plain);
  r.ln_p_normal_clt = normal_approximation(tail, k, kernel, limiting.model(), NormalMode::CltLimit);
  r.ln_p_normal_exactvar = normal_approximation(tail, k, kernel, limiting.model(), NormalMode::ExactVariance);
  return r;
}

/// One report per (mu, agent), mu-major in grid order. Failing cells carry
/// an error message and NaN values; the sweep itself does not abort.
template <StatModel M>
std::vector<AsymptoticReport> sweep(const M& model, const TailSpec& tail, const CombinationMatrix& a,
                                    const std::vector<double>& mu_grid, const std::vector<std::size_t>& agents,
                                    const SweepOptions& opts = {}) {
  validate_mu_grid(mu_grid);
  for (auto k : agents)
    if (k >= a.size()) throw InvalidArgument("sweep: agent index out of range");
  const LimitingLmgf<M> limiting(model, tail.hypothesis, a.perron());

  std::optional<ExponentData> e;
  std::string exponent_error;
  try {
    e = exponent_data(tail, limiting);
  } catch (const Error& err) {
    exponent_error = err.what();
  }

  std::vector<AsymptoticReport> out;
  out.reserve(mu_grid.size() * agents.size());
  for (double mu : mu_grid) {
    std::optional<WeightKernel> kernel;
    std::string kernel_error;
    try {
      kernel.emplace(a, mu, opts.trunc_tol);
    } catch (const Error& err) {
      kernel_error = err.what();
    }
    for (auto k : agents) {
      AsymptoticReport r;
      r.mu = mu;
      r.agent = k;
      if (!e) {
        r.error = exponent_error;
      } else if (!kernel) {
        r.error = kernel_error;
      } else {
        try {
          r = asymptotic_report(tail, k, *kernel, limiting, *e, opts.variant);
        } catch (const Error& err) {
          r.error = err.what();
        }
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace diffdet
