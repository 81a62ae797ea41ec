#pragma once

// Small numerical kernels shared by the rest of the library: compensated
// summation, log-domain helpers, the Gaussian tail, and an adaptive
// Gauss-Kronrod integrator with an absolute tolerance.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "diffdet/errors.hpp"

namespace diffdet {

/// Neumaier's variant of Kahan summation.
class NeumaierSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  NeumaierSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  /// Merge another partial sum, keeping both compensation terms.
  void merge(const NeumaierSum& other) noexcept {
    add(other.sum_);
    add(other.comp_);
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// ln of the mean of exp(xs).
inline double log_mean_exp(std::span<const double> xs) {
  return log_sum_exp(xs) - std::log(static_cast<double>(xs.size()));
}

/// ln Q(z), Q the standard normal complementary CDF. Stays finite far into
/// the upper tail where Q itself underflows.
inline double log_normal_q(double z) {
  if (z < 30.0) return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
  // Asymptotic Mills-ratio series; at z >= 30 five terms reach double precision.
  const double z2 = z * z;
  double term = 1.0;
  double series = 1.0;
  for (int k = 1; k <= 6; ++k) {
    term *= -(2.0 * k - 1.0) / z2;
    series += term;
  }
  return -0.5 * z2 - std::log(z) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

inline double normal_q(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

namespace detail {

// 15-point Kronrod extension of the 7-point Gauss rule.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for nodes kKronrodNodes[1], [3], [5], [7].
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct GkPanel {
  double kronrod;
  double error;
};

template <class F>
GkPanel gauss_kronrod_15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double k = fc * kKronrodWeights[7];
  double g = fc * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kKronrodNodes[j];
    const double f1 = f(c - dx);
    const double f2 = f(c + dx);
    k += kKronrodWeights[j] * (f1 + f2);
    if (j % 2 == 1) g += kGaussWeights[j / 2] * (f1 + f2);
  }
  return {k * h, std::abs((k - g) * h)};
}

template <class F>
double adaptive_gk(const F& f, double a, double b, double tol, int depth, int max_depth,
                   const GkPanel& whole) {
  if (whole.error <= tol ||
      whole.error <= 50.0 * std::numeric_limits<double>::epsilon() * std::abs(whole.kronrod)) {
    return whole.kronrod;
  }
  if (depth >= max_depth) {
    std::ostringstream os;
    os << "adaptive quadrature failed to converge on [" << a << ", " << b
       << "] (error estimate " << whole.error << ")";
    throw QuadratureError(os.str(), a, b);
  }
  const double m = 0.5 * (a + b);
  const GkPanel left = gauss_kronrod_15(f, a, m);
  const GkPanel right = gauss_kronrod_15(f, m, b);
  return adaptive_gk(f, a, m, 0.5 * tol, depth + 1, max_depth, left) +
         adaptive_gk(f, m, b, 0.5 * tol, depth + 1, max_depth, right);
}

}  // namespace detail

struct QuadratureOptions {
  double abs_tol = 1e-10;
  int max_depth = 60;
};

/// Adaptive Gauss-Kronrod (G7/K15) integration of f over [a, b] with an
/// absolute error target. Reversed limits yield the negated integral.
template <class F>
double integrate(const F& f, double a, double b, QuadratureOptions opts = {}) {
  if (a == b) return 0.0;
  if (b < a) return -integrate(f, b, a, opts);
  const detail::GkPanel whole = detail::gauss_kronrod_15(f, a, b);
  return detail::adaptive_gk(f, a, b, opts.abs_tol, 0, opts.max_depth, whole);
}

/// Fixed 10-point Gauss-Legendre rule on [0, 1]; exact for polynomials of
/// degree 19, used on short smooth integrands.
template <class F>
double gauss_legendre_unit(const F& f) {
  static constexpr std::array<double, 5> nodes = {0.1488743389816312108848260, 0.4333953941292471907992659,
                                                  0.6794095682990244062343274, 0.8650633666889845107320967,
                                                  0.9739065285171717200779640};
  static constexpr std::array<double, 5> weights = {0.2955242247147528701738930, 0.2692667193099963550912269,
                                                    0.2190863625159820439955349, 0.1494513491505805931457763,
                                                    0.0666713443086881375935688};
  double s = 0.0;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    s += weights[j] * (f(0.5 * (1.0 - nodes[j])) + f(0.5 * (1.0 + nodes[j])));
  }
  return 0.5 * s;
}

}  // namespace diffdet
