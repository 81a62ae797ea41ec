#pragma once

// LMGF machinery for the steady-state diffusion output y*_{k,mu}:
//
//   omega(t)         = int_0^t psi(tau)/tau dtau
//   phi(t)           = sum_l omega(p_l t)                  (limiting LMGF)
//   phi_{k,mu}(t)    = sum_i sum_l psi(xi_{i,l} t),  xi_{i,l} = mu (1-mu)^{i-1} b_{k,l}(i)
//
// plus the convergence errors between mu phi_{k,mu}(t/mu) and phi(t).

#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <utility>
#include <vector>

#include "diffdet/network.hpp"
#include "diffdet/numerics.hpp"
#include "diffdet/statmodel.hpp"

namespace diffdet {

/// Limiting normalized LMGF phi(t) for one model, hypothesis and Perron
/// vector. omega values are memoized; the cache is shared between copies and
/// guarded by a mutex.
template <StatModel M>
class LimitingLmgf {
 public:
  LimitingLmgf(M model, Hypothesis h, Vector perron, QuadratureOptions quad = {})
      : model_(std::move(model)), h_(h), perron_(std::move(perron)), quad_(quad),
        cache_(std::make_shared<Cache>()) {
    if (perron_.size() == 0) throw InvalidArgument("limiting lmgf: empty Perron vector");
    if ((perron_.array() <= 0.0).any()) throw InvalidArgument("limiting lmgf: Perron entries must be positive");
    if (std::abs(perron_.sum() - 1.0) > 1e-10) throw InvalidArgument("limiting lmgf: Perron vector must sum to 1");
  }

  const M& model() const noexcept { return model_; }
  Hypothesis hypothesis() const noexcept { return h_; }
  const Vector& perron() const noexcept { return perron_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(perron_.size()); }

  double psi(double t) const { return model_.psi(h_, t); }
  double mean() const { return model_.psi_prime(h_, 0.0); }

  /// sum_l p_l^r
  double perron_power_sum(int r) const {
    NeumaierSum s;
    for (Eigen::Index l = 0; l < perron_.size(); ++l) s += std::pow(perron_[l], r);
    return s.value();
  }

  /// (sigma_x^2 / 2) sum_l p_l^2, the limit of VAR[y*] / mu.
  double limiting_variance() const { return 0.5 * model_.psi_second(h_, 0.0) * perron_power_sum(2); }

  double omega(double t) const {
    if (t == 0.0) return 0.0;
    const auto key = std::bit_cast<std::uint64_t>(t);
    {
      std::lock_guard lock(cache_->mutex);
      if (auto it = cache_->omega.find(key); it != cache_->omega.end()) return it->second;
    }
    const double slope0 = mean();
    const double value = integrate(
        [&](double tau) { return tau == 0.0 ? slope0 : model_.psi(h_, tau) / tau; }, 0.0, t, quad_);
    std::lock_guard lock(cache_->mutex);
    cache_->omega.emplace(key, value);
    return value;
  }

  double phi(double t) const {
    NeumaierSum s;
    for (Eigen::Index l = 0; l < perron_.size(); ++l) s += omega(perron_[l] * t);
    return s.value();
  }

  /// (1/t) sum_l psi(p_l t), with the t -> 0 limit psi'(0).
  double phi_prime(double t) const {
    NeumaierSum s;
    for (Eigen::Index l = 0; l < perron_.size(); ++l) {
      const double pl = perron_[l];
      const double a = pl * t;
      if (std::abs(a) < kSmallArgument) {
        // psi(a)/t = p_l int_0^1 psi'(s a) ds, free of the 0/0 cancellation.
        s += pl * gauss_legendre_unit([&](double u) { return model_.psi_prime(h_, u * a); });
      } else {
        s += model_.psi(h_, a) / t;
      }
    }
    return s.value();
  }

  /// (1/t^2) sum_l [(p_l t) psi'(p_l t) - psi(p_l t)], with the t -> 0 limit
  /// psi''(0) sum_l p_l^2 / 2.
  double phi_second(double t) const {
    NeumaierSum s;
    for (Eigen::Index l = 0; l < perron_.size(); ++l) {
      const double pl = perron_[l];
      const double a = pl * t;
      if (std::abs(a) < kSmallArgument) {
        // (a psi'(a) - psi(a)) / t^2 = p_l^2 int_0^1 u psi''(u a) du.
        s += pl * pl * gauss_legendre_unit([&](double u) { return u * model_.psi_second(h_, u * a); });
      } else {
        s += (a * model_.psi_prime(h_, a) - model_.psi(h_, a)) / (t * t);
      }
    }
    return s.value();
  }

  /// Second route to phi: int_0^t psibar(tau)/tau dtau, psibar(t) = sum_l psi(p_l t).
  double phi_via_psibar(double t) const {
    if (t == 0.0) return 0.0;
    const double slope0 = mean();
    auto integrand = [&](double tau) {
      if (tau == 0.0) return slope0;
      NeumaierSum s;
      for (Eigen::Index l = 0; l < perron_.size(); ++l) s += model_.psi(h_, perron_[l] * tau);
      return s.value() / tau;
    };
    return integrate(integrand, 0.0, t, quad_);
  }

 private:
  // Below this |p_l t| the integral forms replace the cancelling quotients;
  // 10-point Gauss-Legendre is exact to rounding there.
  static constexpr double kSmallArgument = 0.25;

  struct Cache {
    std::mutex mutex;
    std::unordered_map<std::uint64_t, double> omega;
  };

  M model_;
  Hypothesis h_;
  Vector perron_;
  QuadratureOptions quad_;
  std::shared_ptr<Cache> cache_;
};

namespace detail {

// Visits every (i, l) coefficient xi_{i,l} = mu (1-mu)^{i-1} b_{k,l}(i) of
// agent k in deterministic order (i outer, l inner).
template <class F>
void for_each_coefficient(const WeightKernel& kernel, std::size_t k, F&& f) {
  const double mu = kernel.mu();
  for (std::size_t i = 1; i <= kernel.horizon(); ++i) {
    const double g = mu * kernel.decay(i);
    const auto row = kernel.row(k, i);
    for (std::size_t l = 0; l < row.size(); ++l) f(i, l, g * row[l]);
  }
}

inline void check_agent(const WeightKernel& kernel, std::size_t k) {
  if (k >= kernel.size()) throw InvalidArgument("agent index out of range");
}

}  // namespace detail

/// phi_{k,mu}(t), truncated at the kernel horizon.
template <StatModel M>
double phi_trunc(const M& model, Hypothesis h, double t, std::size_t k, const WeightKernel& kernel) {
  detail::check_agent(kernel, k);
  NeumaierSum s;
  detail::for_each_coefficient(kernel, k, [&](std::size_t, std::size_t, double xi) { s += model.psi(h, xi * t); });
  return s.value();
}

/// phi'_{k,mu}(t) = sum xi psi'(xi t), truncated.
template <StatModel M>
double phi_trunc_prime(const M& model, Hypothesis h, double t, std::size_t k, const WeightKernel& kernel) {
  detail::check_agent(kernel, k);
  NeumaierSum s;
  detail::for_each_coefficient(kernel, k,
                               [&](std::size_t, std::size_t, double xi) { s += xi * model.psi_prime(h, xi * t); });
  return s.value();
}

/// r-th derivative sum xi^r psi^{(r)}(xi t), r = 1..3, truncated.
template <StatModel M>
double phi_trunc_derivative(const M& model, Hypothesis h, int r, double t, std::size_t k,
                            const WeightKernel& kernel) {
  detail::check_agent(kernel, k);
  if (r < 1 || r > 3) throw InvalidArgument("phi_trunc_derivative: order must be 1, 2 or 3");
  NeumaierSum s;
  detail::for_each_coefficient(kernel, k, [&](std::size_t, std::size_t, double xi) {
    const double a = xi * t;
    const double d = r == 1 ? model.psi_prime(h, a) : r == 2 ? model.psi_second(h, a) : model.psi_third(h, a);
    s += std::pow(xi, r) * d;
  });
  return s.value();
}

/// sum_i sum_l xi_{i,l}^r over the full infinite series: cached powers
/// explicitly, the remainder (where b_{k,l}(i) = p_l) as a geometric tail.
inline double coefficient_power_sum(int r, std::size_t k, const WeightKernel& kernel) {
  detail::check_agent(kernel, k);
  const double mu = kernel.mu();
  const double q = std::pow(1.0 - mu, r);
  NeumaierSum s;
  const std::size_t cached = kernel.cached_powers();
  for (std::size_t i = 1; i <= cached; ++i) {
    const double g = mu * std::pow(1.0 - mu, static_cast<double>(i - 1));
    for (double b : kernel.row(k, i)) s += std::pow(g * b, r);
  }
  NeumaierSum pr;
  for (Eigen::Index l = 0; l < kernel.perron().size(); ++l) pr += std::pow(kernel.perron()[l], r);
  // sum_{i > cached} (mu (1-mu)^{i-1})^r = mu^r q^cached / (1 - q)
  s += std::pow(mu, r) * std::pow(q, static_cast<double>(cached)) / (-std::expm1(r * std::log1p(-mu))) * pr.value();
  return s.value();
}

/// r-th cumulant of the untruncated steady-state variable, phi^{(r)}_{k,mu}(0).
template <StatModel M>
double steady_state_cumulant(const M& model, Hypothesis h, int r, std::size_t k, const WeightKernel& kernel) {
  return cumulant(model, h, r) * coefficient_power_sum(r, k, kernel);
}

/// sum xi_{i,l} over the truncated series, i.e. 1 - (1-mu)^N up to rounding.
inline double kernel_mass(std::size_t k, const WeightKernel& kernel) {
  detail::check_agent(kernel, k);
  NeumaierSum s;
  detail::for_each_coefficient(kernel, k, [&](std::size_t, std::size_t, double xi) { s += xi; });
  return s.value();
}

/// VAR[y*_{k,mu}] = sigma_x^2 sum xi^2 over the truncated series.
template <StatModel M>
double steady_state_variance(const M& model, Hypothesis h, std::size_t k, const WeightKernel& kernel) {
  detail::check_agent(kernel, k);
  NeumaierSum s;
  detail::for_each_coefficient(kernel, k, [&](std::size_t, std::size_t, double xi) { s += xi * xi; });
  return variance(model, h) * s.value();
}

struct ConvergenceErrors {
  double c1;  // phi(theta) - mu phi_{k,mu}(theta/mu)
  double c2;  // phi'(theta) - phi'_{k,mu}(theta/mu)
};

template <StatModel M>
ConvergenceErrors convergence_errors(double theta, std::size_t k, const WeightKernel& kernel,
                                     const LimitingLmgf<M>& limiting) {
  detail::check_agent(kernel, k);
  const double mu = kernel.mu();
  const M& model = limiting.model();
  const Hypothesis h = limiting.hypothesis();
  // Arguments are formed as (1-mu)^{i-1} b theta directly rather than xi * (theta/mu).
  NeumaierSum s1;
  NeumaierSum s2;
  for (std::size_t i = 1; i <= kernel.horizon(); ++i) {
    const double g = kernel.decay(i);
    for (double b : kernel.row(k, i)) {
      const double a = g * b * theta;
      s1 += model.psi(h, a);
      s2 += g * b * model.psi_prime(h, a);
    }
  }
  return {limiting.phi(theta) - mu * s1.value(), limiting.phi_prime(theta) - mu * s2.value()};
}

}  // namespace diffdet
