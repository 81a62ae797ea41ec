#pragma once

// Local-statistic models. A model exposes, for each hypothesis, the LMGF
// psi(t) = ln E[exp(t x)] with its first three derivatives, a direct
// sampler, and a sampler for the exponentially twisted law
// exp(eta x - psi(eta)) m(dx).

#include <array>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "diffdet/errors.hpp"
#include "diffdet/numerics.hpp"

namespace diffdet {

enum class Hypothesis { H0, H1 };

inline const char* to_string(Hypothesis h) { return h == Hypothesis::H0 ? "H0" : "H1"; }

using Rng = std::mt19937_64;

/// Uniform draw on the open interval (0, 1) from the top 53 bits.
inline double uniform_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
  // Box-Muller; one value per call keeps streams position-independent.
  const double u1 = uniform_open(rng);
  const double u2 = uniform_open(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <class S>
concept Sampler = requires(const S s, Rng& rng) {
  { s(rng) } -> std::convertible_to<double>;
};

template <class M>
concept StatModel = requires(const M m, Hypothesis h, double t, Rng& rng) {
  { m.psi(h, t) } -> std::convertible_to<double>;
  { m.psi_prime(h, t) } -> std::convertible_to<double>;
  { m.psi_second(h, t) } -> std::convertible_to<double>;
  { m.psi_third(h, t) } -> std::convertible_to<double>;
  { m.sample(rng, h) } -> std::convertible_to<double>;
  { m.twisted(h, t) } -> Sampler;
  { m.sample_twisted(rng, t, h) } -> std::convertible_to<double>;
  { m.is_lattice() } -> std::convertible_to<bool>;
  { m.name() } -> std::convertible_to<std::string>;
};

/// r-th cumulant of the local statistic, psi^{(r)}(0), r = 1..3.
template <StatModel M>
double cumulant(const M& model, Hypothesis h, int r) {
  switch (r) {
    case 1:
      return model.psi_prime(h, 0.0);
    case 2:
      return model.psi_second(h, 0.0);
    case 3:
      return model.psi_third(h, 0.0);
    default:
      throw InvalidArgument("cumulant: order must be 1, 2 or 3");
  }
}

template <StatModel M>
double mean(const M& model, Hypothesis h) {
  return model.psi_prime(h, 0.0);
}

template <StatModel M>
double variance(const M& model, Hypothesis h) {
  return model.psi_second(h, 0.0);
}

namespace detail {

// Derivatives of ln sinch(u) = ln(sinh(u)/u). With
// c_n = 2^{2n} B_{2n} / (2n)!, coth(u) - 1/u = sum_n c_n u^{2n-1}.
inline constexpr std::array<double, 12> kSinchCoefficients = [] {
  constexpr std::array<double, 12> bernoulli = {1.0 / 6.0,
                                                -1.0 / 30.0,
                                                1.0 / 42.0,
                                                -1.0 / 30.0,
                                                5.0 / 66.0,
                                                -691.0 / 2730.0,
                                                7.0 / 6.0,
                                                -3617.0 / 510.0,
                                                43867.0 / 798.0,
                                                -174611.0 / 330.0,
                                                854513.0 / 138.0,
                                                -236364091.0 / 2730.0};
  std::array<double, 12> c{};
  double pow4 = 1.0;
  double factorial = 1.0;
  for (int n = 1; n <= 12; ++n) {
    pow4 *= 4.0;
    factorial *= (2.0 * n - 1.0) * (2.0 * n);
    c[n - 1] = pow4 * bernoulli[n - 1] / factorial;
  }
  return c;
}();

inline constexpr double kSinchSeriesCutoff = 0.5;

struct LogSinchDerivatives {
  double value;   // ln sinch(u)
  double first;   // coth u - 1/u
  double second;  // 1/u^2 - csch^2 u
  double third;   // 2 csch^2 u coth u - 2/u^3
};

inline LogSinchDerivatives log_sinch(double u) {
  const double a = std::abs(u);
  if (a < kSinchSeriesCutoff) {
    LogSinchDerivatives d{0.0, 0.0, 0.0, 0.0};
    const double u2 = u * u;
    // 12 terms reach double precision for |u| < 0.5.
    double even = 1.0;  // u^{2n-2}
    double odd = u;     // u^{2n-3}, used from n = 2
    for (int n = 1; n <= 12; ++n) {
      const double c = kSinchCoefficients[n - 1];
      const double m = 2.0 * n;
      d.value += c * even * u2 / m;
      d.first += c * even * u;
      d.second += c * (m - 1.0) * even;
      if (n >= 2) {
        d.third += c * (m - 1.0) * (m - 2.0) * odd;
        odd *= u2;
      }
      even *= u2;
    }
    return d;
  }
  const double coth = 1.0 / std::tanh(u);
  const double csch = 1.0 / std::sinh(u);
  const double csch2 = std::isfinite(csch) ? csch * csch : 0.0;
  LogSinchDerivatives d{};
  d.value = a + std::log1p(-std::exp(-2.0 * a)) - std::log(2.0 * a);
  d.first = coth - 1.0 / u;
  d.second = 1.0 / (u * u) - csch2;
  d.third = 2.0 * csch2 * coth - 2.0 / (u * u * u);
  return d;
}

}  // namespace detail

/// Log-likelihood ratio of a unit-scale Laplace shift-in-mean test,
/// x = |d| - |d - rho| with d ~ L(d) under H0 and L(d - rho) under H1.
/// x has atoms at -rho and +rho and a density on (-rho, rho).
class LaplaceShiftModel {
 public:
  explicit LaplaceShiftModel(double rho) : rho_(rho) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("laplace model: rho must be positive");
  }

  double rho() const noexcept { return rho_; }
  bool is_lattice() const noexcept { return false; }
  std::string name() const { return "laplace"; }

  /// Piecewise limiter form of the log-likelihood ratio.
  double llr(double d) const noexcept {
    if (d < 0.0) return -rho_;
    if (d > rho_) return rho_;
    return 2.0 * d - rho_;
  }

  double psi(Hypothesis h, double t) const { return psi0(h == Hypothesis::H0 ? t : -t); }
  double psi_prime(Hypothesis h, double t) const {
    return h == Hypothesis::H0 ? tilted(t).mean : -tilted(-t).mean;
  }
  double psi_second(Hypothesis h, double t) const { return tilted(h == Hypothesis::H0 ? t : -t).variance; }
  double psi_third(Hypothesis h, double t) const {
    return h == Hypothesis::H0 ? tilted(t).third : -tilted(-t).third;
  }

  /// ln E_0[exp(t x)] in closed form:
  /// e^{-t rho}/2 + e^{(t-1) rho}/2 + (rho e^{-rho/2}/2) sinch(rho (t - 1/2)).
  double psi0(double t) const {
    const auto terms = log_terms(t);
    return log_sum_exp(terms);
  }

  /// Mixture weights of the H0 law twisted by eta: P[x = -rho], P[x = +rho],
  /// and the exponent of the continuous part, density ~ exp(x (eta - 1/2)).
  struct Twisted {
    double rho;
    double p_minus;
    double p_plus;
    double slope;
    double sign;  // -1 maps an H0 draw to an H1 draw

    double operator()(Rng& rng) const {
      const double u = uniform_open(rng);
      double x;
      if (u < p_minus) {
        x = -rho;
      } else if (u < p_minus + p_plus) {
        x = rho;
      } else {
        x = continuous(uniform_open(rng));
      }
      return sign * x;
    }

    /// Inverse CDF of exp(slope x) on [-rho, rho].
    double continuous(double v) const {
      const double a = slope * rho;
      if (std::abs(a) < 1e-12) return rho * (2.0 * v - 1.0);
      if (slope > 0.0) return rho + std::log(v + (1.0 - v) * std::exp(-2.0 * a)) / slope;
      return -rho + std::log1p(v * std::expm1(2.0 * a)) / slope;
    }
  };

  Twisted twisted(Hypothesis h, double eta) const {
    // p_1(x) = p_0(-x): twisting H1 by eta equals twisting H0 by -eta, negated.
    const double e = h == Hypothesis::H0 ? eta : -eta;
    const auto terms = log_terms(e);
    const double lse = log_sum_exp(terms);
    return Twisted{rho_, std::exp(terms[0] - lse), std::exp(terms[1] - lse), e - 0.5,
                   h == Hypothesis::H0 ? 1.0 : -1.0};
  }

  double sample(Rng& rng, Hypothesis h) const {
    // Laplace(0, 1) via a signed exponential, shifted by rho under H1.
    const double u = uniform_open(rng);
    double d = u < 0.5 ? std::log(2.0 * u) : -std::log(2.0 * (1.0 - u));
    if (h == Hypothesis::H1) d += rho_;
    return llr(d);
  }

  double sample_twisted(Rng& rng, double eta, Hypothesis h) const { return twisted(h, eta)(rng); }

 private:
  std::array<double, 3> log_terms(double t) const {
    const double ln_half = -std::numbers::ln2;
    return {ln_half - t * rho_, ln_half + (t - 1.0) * rho_,
            std::log(0.5 * rho_) - 0.5 * rho_ + detail::log_sinch(rho_ * (t - 0.5)).value};
  }

  // Central moments of the H0 law twisted by t, computed component-wise so
  // that large |t| does not cancel.
  struct Moments {
    double mean;
    double variance;
    double third;
  };

  Moments tilted(double t) const {
    const auto terms = log_terms(t);
    const double lse = log_sum_exp(terms);
    const std::array<double, 3> w = {std::exp(terms[0] - lse), std::exp(terms[1] - lse), std::exp(terms[2] - lse)};
    const auto ls = detail::log_sinch(rho_ * (t - 0.5));
    const std::array<double, 3> mean = {-rho_, rho_, rho_ * ls.first};
    const std::array<double, 3> var = {0.0, 0.0, rho_ * rho_ * ls.second};
    const std::array<double, 3> k3 = {0.0, 0.0, rho_ * rho_ * rho_ * ls.third};
    double m1 = 0.0;
    for (int j = 0; j < 3; ++j) m1 += w[j] * mean[j];
    double m2 = 0.0;
    double m3 = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double d = mean[j] - m1;
      m2 += w[j] * (var[j] + d * d);
      m3 += w[j] * (k3[j] + 3.0 * var[j] * d + d * d * d);
    }
    return {m1, m2, m3};
  }

  double rho_;
};

/// Gaussian statistic N(mean_h, var); its LMGF is quadratic, which makes
/// every downstream quantity available in closed form.
class GaussianShiftModel {
 public:
  GaussianShiftModel(double mean0, double mean1, double var) : mean0_(mean0), mean1_(mean1), var_(var) {
    if (!(var > 0.0) || !std::isfinite(var)) throw InvalidArgument("gaussian model: variance must be positive");
    if (!std::isfinite(mean0) || !std::isfinite(mean1)) throw InvalidArgument("gaussian model: non-finite mean");
  }

  double mean_of(Hypothesis h) const noexcept { return h == Hypothesis::H0 ? mean0_ : mean1_; }
  double var() const noexcept { return var_; }
  bool is_lattice() const noexcept { return false; }
  std::string name() const { return "gaussian"; }

  double psi(Hypothesis h, double t) const { return mean_of(h) * t + 0.5 * var_ * t * t; }
  double psi_prime(Hypothesis h, double t) const { return mean_of(h) + var_ * t; }
  double psi_second(Hypothesis, double) const { return var_; }
  double psi_third(Hypothesis, double) const { return 0.0; }

  struct Twisted {
    double mean;
    double sd;
    double operator()(Rng& rng) const { return mean + sd * standard_normal(rng); }
  };

  Twisted twisted(Hypothesis h, double eta) const { return {mean_of(h) + var_ * eta, std::sqrt(var_)}; }
  double sample(Rng& rng, Hypothesis h) const { return twisted(h, 0.0)(rng); }
  double sample_twisted(Rng& rng, double eta, Hypothesis h) const { return twisted(h, eta)(rng); }

 private:
  double mean0_;
  double mean1_;
  double var_;
};

static_assert(StatModel<LaplaceShiftModel>);
static_assert(StatModel<GaussianShiftModel>);

}  // namespace diffdet
