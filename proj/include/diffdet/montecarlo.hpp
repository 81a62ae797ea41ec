#pragma once

// Simulation of the ATC diffusion and Monte Carlo estimation of the
// steady-state tail probabilities, plain and importance-sampled with the
// per-(i, l) exponential twisting eta_{i,l} = (1-mu)^{i-1} b_{k,l}(i) theta.
//
// Steady-state draws use the truncated series
//   y* = sum_{i<=N} sum_l mu (1-mu)^{i-1} b_{k,l}(i) x_l(i)
// which has the law of the diffusion output after the transient has died out.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "diffdet/asymptotics.hpp"
#include "diffdet/lmgf.hpp"
#include "diffdet/network.hpp"
#include "diffdet/numerics.hpp"
#include "diffdet/statmodel.hpp"

namespace diffdet {

struct DiffusionState {
  Vector y;
  std::size_t n = 0;
};

/// One adapt-then-combine iteration:
///   v_k = y_k + mu (x_k - y_k),   y_k <- sum_l a_{k,l} v_l.
inline DiffusionState atc_step(const DiffusionState& state, const Matrix& a, double mu, const Vector& x) {
  if (a.rows() != state.y.size() || a.cols() != state.y.size() || x.size() != state.y.size())
    throw InvalidArgument("atc_step: dimension mismatch");
  const Vector v = state.y + mu * (x - state.y);
  return {a * v, state.n + 1};
}

/// Runs `steps` ATC iterations with fresh i.i.d. local statistics.
template <StatModel M>
DiffusionState run_diffusion(const M& model, Hypothesis h, const Matrix& a, double mu, std::size_t steps, Rng& rng,
                             DiffusionState state) {
  Vector x(state.y.size());
  for (std::size_t n = 0; n < steps; ++n) {
    for (Eigen::Index l = 0; l < x.size(); ++l) x[l] = model.sample(rng, h);
    state = atc_step(state, a, mu, x);
  }
  return state;
}

/// Warm-up length ceil(8 / mu) used before reading diffusion states.
inline std::size_t warmup_steps(double mu) { return static_cast<std::size_t>(std::ceil(8.0 / mu)); }

/// Series coefficients xi_{i,l} of one agent, flattened i-major.
inline std::vector<double> series_coefficients(std::size_t k, const WeightKernel& kernel) {
  detail::check_agent(kernel, k);
  std::vector<double> xi;
  xi.reserve(kernel.horizon() * kernel.size());
  detail::for_each_coefficient(kernel, k, [&](std::size_t, std::size_t, double c) { xi.push_back(c); });
  return xi;
}

/// Direct sampler of the truncated steady-state variable y*_{k,mu}.
template <StatModel M>
class SteadyStateSampler {
 public:
  SteadyStateSampler(const M& model, Hypothesis h, std::size_t k, const WeightKernel& kernel)
      : model_(model), h_(h), xi_(series_coefficients(k, kernel)) {}

  double operator()(Rng& rng) const {
    double y = 0.0;
    for (double c : xi_) y += c * model_.sample(rng, h_);
    return y;
  }

 private:
  M model_;
  Hypothesis h_;
  std::vector<double> xi_;
};

template <StatModel M>
double steady_state_sample(Rng& rng, std::size_t k, const WeightKernel& kernel, const M& model, Hypothesis h) {
  return SteadyStateSampler<M>(model, h, k, kernel)(rng);
}

/// Importance-sampling draw: x_l(i) from the law twisted by
/// eta_{i,l} = (theta/mu) xi_{i,l}; the likelihood ratio of the whole
/// ensemble is exp(-sum eta x + sum psi(eta)).
template <StatModel M>
class TwistedSteadyStateSampler {
 public:
  using Twist = decltype(std::declval<const M&>().twisted(Hypothesis::H0, 0.0));

  struct Draw {
    double y;
    double log_weight;
  };

  TwistedSteadyStateSampler(const M& model, Hypothesis h, std::size_t k, const WeightKernel& kernel, double theta)
      : theta_(theta), mu_(kernel.mu()) {
    detail::check_agent(kernel, k);
    NeumaierSum psi_sum;
    for (std::size_t i = 1; i <= kernel.horizon(); ++i) {
      const double g = kernel.decay(i);
      for (double b : kernel.row(k, i)) {
        const double eta = g * b * theta;
        xi_.push_back(mu_ * g * b);
        eta_.push_back(eta);
        twists_.push_back(model.twisted(h, eta));
        psi_sum += model.psi(h, eta);
      }
    }
    log_normalizer_ = psi_sum.value();
  }

  /// sum_{i,l} psi(eta_{i,l}) = phi_{k,mu}(theta/mu; N).
  double log_normalizer() const noexcept { return log_normalizer_; }
  double theta() const noexcept { return theta_; }
  double mu() const noexcept { return mu_; }

  Draw operator()(Rng& rng) const {
    double y = 0.0;
    double tilt = 0.0;
    for (std::size_t j = 0; j < twists_.size(); ++j) {
      const double x = twists_[j](rng);
      y += xi_[j] * x;
      tilt += eta_[j] * x;
    }
    return {y, log_normalizer_ - tilt};
  }

 private:
  double theta_;
  double mu_;
  std::vector<double> xi_;
  std::vector<double> eta_;
  std::vector<Twist> twists_;
  double log_normalizer_ = 0.0;
};

/// Tail-probability estimate from (possibly weighted) indicators.
struct ISEstimate {
  double p_hat = 0.0;
  double log_p_hat = -std::numeric_limits<double>::infinity();
  double std_err = 0.0;
  std::size_t n_samples = 0;
  /// (sum w 1)^2 / sum (w 1)^2 over the weighted indicators.
  double ess = 0.0;
  bool degenerate = false;
  std::string warning;
};

struct McOptions {
  std::size_t samples = 100'000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Fraction of the sample budget below which ESS triggers a warning.
inline constexpr double kDegenerateEssFraction = 0.01;

namespace detail {

inline constexpr std::size_t kChunkSize = 1024;

/// Stream for a block of replications, derived from the root seed and the
/// block counter so results do not depend on scheduling.
inline Rng chunk_rng(std::uint64_t seed, std::uint64_t chunk) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32), 0x9e3779b9u};
  return Rng(seq);
}

struct ChunkSums {
  NeumaierSum value;
  NeumaierSum square;
};

/// Averages exp(log_w - log_ref) 1{hit} over replications. `draw(rng)`
/// returns {hit, log_w}. Chunks are reduced in index order, so the result is
/// bitwise identical for any thread count.
template <class DrawFn>
ISEstimate weighted_tail_estimate(const McOptions& opts, double log_ref, const DrawFn& draw) {
  if (opts.samples < 100) throw InvalidArgument("monte carlo: at least 100 samples required");
  const std::size_t n = opts.samples;
  const std::size_t chunks = (n + kChunkSize - 1) / kChunkSize;
  std::vector<ChunkSums> sums(chunks);

  auto run_chunk = [&](std::size_t c) {
    Rng rng = chunk_rng(opts.seed, c);
    const std::size_t begin = c * kChunkSize;
    const std::size_t end = std::min(n, begin + kChunkSize);
    ChunkSums s;
    for (std::size_t r = begin; r < end; ++r) {
      const auto [hit, log_w] = draw(rng);
      if (!hit) continue;
      const double v = std::exp(log_w - log_ref);
      s.value += v;
      s.square += v * v;
    }
    sums[c] = s;
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(chunks)));
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < chunks; c = next++) run_chunk(c);
      });
    }
    for (auto& t : pool) t.join();
  }

  ChunkSums total;
  for (const auto& s : sums) {
    total.value.merge(s.value);
    total.square.merge(s.square);
  }
  const double nd = static_cast<double>(n);
  const double sum = total.value.value();
  const double sum2 = total.square.value();
  const double m = sum / nd;
  const double var = std::max(0.0, sum2 / nd - m * m);

  ISEstimate est;
  est.n_samples = n;
  est.log_p_hat = m > 0.0 ? log_ref + std::log(m) : -std::numeric_limits<double>::infinity();
  est.p_hat = std::exp(est.log_p_hat);
  est.std_err = std::exp(log_ref) * std::sqrt(var / nd);
  est.ess = sum2 > 0.0 ? sum * sum / sum2 : 0.0;
  if (est.ess < kDegenerateEssFraction * nd) {
    est.degenerate = true;
    std::ostringstream os;
    os << "DegenerateESS: effective sample size " << est.ess << " below " << kDegenerateEssFraction * 100.0
       << "% of " << n << " samples";
    est.warning = os.str();
  }
  return est;
}

inline bool beyond(const TailSpec& tail, double y) {
  return tail.direction == TailDirection::Upper ? y > tail.gamma : y <= tail.gamma;
}

}  // namespace detail

/// Plain Monte Carlo: unit weights, binomial standard error.
template <StatModel M>
ISEstimate plain_mc_tail(const TailSpec& tail, std::size_t k, const WeightKernel& kernel, const M& model,
                         const McOptions& opts) {
  const SteadyStateSampler<M> sampler(model, tail.hypothesis, k, kernel);
  return detail::weighted_tail_estimate(opts, 0.0, [&](Rng& rng) {
    return std::pair<bool, double>{detail::beyond(tail, sampler(rng)), 0.0};
  });
}

/// Importance sampling with a given twist theta (theta = 0 is plain MC).
template <StatModel M>
ISEstimate is_tail_with_theta(const TailSpec& tail, std::size_t k, const WeightKernel& kernel, const M& model,
                              double theta, const McOptions& opts) {
  const TwistedSteadyStateSampler<M> sampler(model, tail.hypothesis, k, kernel, theta);
  // Reference: the log weight on the threshold, an upper bound for the
  // weights of hits, so every scaled term stays at or below about 1.
  const double log_ref = sampler.log_normalizer() - theta / kernel.mu() * tail.gamma;
  return detail::weighted_tail_estimate(opts, log_ref, [&](Rng& rng) {
    const auto d = sampler(rng);
    return std::pair<bool, double>{detail::beyond(tail, d.y), d.log_weight};
  });
}

/// Importance sampling with the twist eta = theta_gamma / mu.
template <StatModel M>
ISEstimate is_tail(const TailSpec& tail, std::size_t k, const WeightKernel& kernel, const LimitingLmgf<M>& limiting,
                   const McOptions& opts) {
  const double theta = solve_theta(tail, limiting);
  return is_tail_with_theta(tail, k, kernel, limiting.model(), theta, opts);
}

}  // namespace diffdet
