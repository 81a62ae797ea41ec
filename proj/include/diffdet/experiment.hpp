#pragma once

// Config-driven experiments behind the command-line tool, plus their CSV and
// JSON renderings. The tool only parses flags and writes the strings built
// here, so library calls and the tool produce identical bytes.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "diffdet/asymptotics.hpp"
#include "diffdet/config.hpp"
#include "diffdet/montecarlo.hpp"
#include "diffdet/network.hpp"
#include "diffdet/numerics.hpp"

namespace diffdet {

/// Independent stream seed for one (mu index, agent, estimator) cell.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(mix(root) ^ a) ^ b) ^ c);
}

/// Shortest round-trip text for a double; non-finite values print as NaN,
/// inf and -inf.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "NaN";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline nlohmann::json json_number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

template <class F>
decltype(auto) visit_model(const AnyModel& m, F&& f) {
  return std::visit(std::forward<F>(f), m);
}

}  // namespace detail

// ---- topology-info -------------------------------------------------------

struct TopologyInfo {
  std::size_t size;
  std::string rule;
  std::vector<std::size_t> degrees;
  double lambda2;
  Vector perron;
  bool doubly_stochastic;
};

inline TopologyInfo topology_info(const ExperimentConfig& cfg) {
  const auto a = build_combination(cfg.combination, cfg.topology);
  return {cfg.topology.size(), to_string(cfg.combination.rule), cfg.topology.degrees(), a.lambda2(), a.perron(),
          a.doubly_stochastic()};
}

inline std::string render_text(const TopologyInfo& info) {
  std::ostringstream os;
  os << "S: " << info.size << "\n";
  os << "rule: " << info.rule << "\n";
  os << "degrees:";
  for (auto d : info.degrees) os << ' ' << d;
  os << "\nlambda2: " << format_number(info.lambda2) << "\n";
  os << "perron:";
  for (Eigen::Index l = 0; l < info.perron.size(); ++l) os << ' ' << format_number(info.perron[l]);
  os << "\ndoubly_stochastic: " << (info.doubly_stochastic ? "true" : "false") << "\n";
  return os.str();
}

inline std::string render_json(const TopologyInfo& info) {
  nlohmann::json j;
  j["S"] = info.size;
  j["rule"] = info.rule;
  j["degrees"] = info.degrees;
  j["lambda2"] = info.lambda2;
  j["perron"] = std::vector<double>(info.perron.data(), info.perron.data() + info.perron.size());
  j["doubly_stochastic"] = info.doubly_stochastic;
  return j.dump(2) + "\n";
}

// ---- asymptotics ---------------------------------------------------------

inline std::vector<AsymptoticReport> run_asymptotics(const ExperimentConfig& cfg, const RuleSpec& rule) {
  if (cfg.mu_grid.empty()) throw ConfigError("/mu_grid", "must not be empty");
  const auto a = build_combination(rule, cfg.topology);
  return detail::visit_model(cfg.model, [&](const auto& m) {
    return sweep(m, cfg.tail, a, cfg.mu_grid, cfg.agents, SweepOptions{cfg.trunc_tol, cfg.correction});
  });
}

inline std::vector<AsymptoticReport> run_asymptotics(const ExperimentConfig& cfg) {
  return run_asymptotics(cfg, cfg.combination);
}

inline const std::vector<std::string>& asymptotics_columns() {
  static const std::vector<std::string> c = {"mu",          "agent",     "theta",           "rate",
                                             "eps_plain",   "eps_refined", "ln_p_asym",     "ln_p_normal_clt",
                                             "ln_p_normal_exactvar"};
  return c;
}

namespace detail {

inline std::vector<double> asymptotics_values(const AsymptoticReport& r) {
  return {r.theta, r.rate, r.eps_plain, r.eps_refined, r.ln_p_asym, r.ln_p_normal_clt, r.ln_p_normal_exactvar};
}

inline void put_asymptotics(nlohmann::json& j, const AsymptoticReport& r) {
  j["mu"] = r.mu;
  j["agent"] = r.agent;
  const auto values = asymptotics_values(r);
  for (std::size_t c = 0; c < values.size(); ++c) j[asymptotics_columns()[c + 2]] = json_number(values[c]);
}

inline std::string asymptotics_csv_cells(const AsymptoticReport& r) {
  std::string line = format_number(r.mu) + "," + std::to_string(r.agent);
  for (double v : asymptotics_values(r)) line += "," + format_number(v);
  return line;
}

inline std::string join_header(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
  return out;
}

}  // namespace detail

inline std::string render_csv(const std::vector<AsymptoticReport>& rows) {
  std::string out = detail::join_header(asymptotics_columns()) + ",error\n";
  for (const auto& r : rows) out += detail::asymptotics_csv_cells(r) + "," + detail::csv_field(r.error) + "\n";
  return out;
}

inline std::string render_json(const std::vector<AsymptoticReport>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    detail::put_asymptotics(j, r);
    j["error"] = r.error;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

// ---- estimate ------------------------------------------------------------

struct EstimateRow {
  AsymptoticReport asymptotics;
  std::optional<ISEstimate> mc;
  std::optional<ISEstimate> is;
  std::string error;  // estimator failure; asymptotics failures stay in asymptotics.error

  bool ok() const noexcept { return error.empty() && (mc || is); }
  std::string warning() const {
    std::string w;
    if (mc && mc->degenerate) w = "mc: " + mc->warning;
    if (is && is->degenerate) w += (w.empty() ? "" : "; ") + ("is: " + is->warning);
    return w;
  }
};

/// Asymptotics plus plain and importance-sampling estimates for each cell.
/// Estimator k of cell (j, agent) draws from derive_seed(seed, j, agent, k).
inline std::vector<EstimateRow> run_estimate(const ExperimentConfig& cfg) {
  if (!cfg.seed) throw ConfigError("/seed", "a seed is required for Monte Carlo runs");
  if (!cfg.run_mc && !cfg.run_is) throw ConfigError("/estimators", "no estimator selected");
  const auto reports = run_asymptotics(cfg);
  const auto a = build_combination(cfg.combination, cfg.topology);
  std::vector<EstimateRow> rows;
  rows.reserve(reports.size());
  return detail::visit_model(cfg.model, [&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    const LimitingLmgf<M> limiting(m, cfg.tail.hypothesis, a.perron());
    std::size_t r = 0;
    for (std::size_t j = 0; j < cfg.mu_grid.size(); ++j) {
      std::optional<WeightKernel> kernel;
      std::string kernel_error;
      try {
        kernel.emplace(a, cfg.mu_grid[j], cfg.trunc_tol);
      } catch (const Error& e) {
        kernel_error = e.what();
      }
      for (std::size_t k : cfg.agents) {
        EstimateRow row{reports[r++], std::nullopt, std::nullopt, {}};
        if (!kernel) {
          row.error = kernel_error;
          rows.push_back(std::move(row));
          continue;
        }
        try {
          if (cfg.run_mc) {
            const McOptions o{cfg.samples, derive_seed(*cfg.seed, j, k, 0), cfg.threads};
            row.mc = plain_mc_tail(cfg.tail, k, *kernel, m, o);
          }
          if (cfg.run_is) {
            const McOptions o{cfg.samples, derive_seed(*cfg.seed, j, k, 1), cfg.threads};
            const double theta = row.asymptotics.ok() ? row.asymptotics.theta : solve_theta(cfg.tail, limiting);
            row.is = is_tail_with_theta(cfg.tail, k, *kernel, m, theta, o);
          }
        } catch (const Error& e) {
          row.error = e.what();
        }
        rows.push_back(std::move(row));
      }
    }
    return rows;
  });
}

inline std::string render_csv(const std::vector<EstimateRow>& rows) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::string out =
      detail::join_header(asymptotics_columns()) + ",p_mc,se_mc,p_is,se_is,ess,ln_p_is,warning,error\n";
  for (const auto& row : rows) {
    out += detail::asymptotics_csv_cells(row.asymptotics);
    out += "," + format_number(row.mc ? row.mc->p_hat : nan);
    out += "," + format_number(row.mc ? row.mc->std_err : nan);
    out += "," + format_number(row.is ? row.is->p_hat : nan);
    out += "," + format_number(row.is ? row.is->std_err : nan);
    out += "," + format_number(row.is ? row.is->ess : nan);
    out += "," + format_number(row.is ? row.is->log_p_hat : nan);
    std::string error = row.asymptotics.error;
    if (!row.error.empty()) error += (error.empty() ? "" : "; ") + row.error;
    out += "," + detail::csv_field(row.warning()) + "," + detail::csv_field(error) + "\n";
  }
  return out;
}

inline std::string render_json(const std::vector<EstimateRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j;
    detail::put_asymptotics(j, row.asymptotics);
    auto put = [&](const char* key, const std::optional<ISEstimate>& e) {
      if (!e) {
        j[key] = nullptr;
        return;
      }
      j[key] = {{"p_hat", detail::json_number(e->p_hat)},
                {"log_p_hat", detail::json_number(e->log_p_hat)},
                {"std_err", detail::json_number(e->std_err)},
                {"n_samples", e->n_samples},
                {"ess", detail::json_number(e->ess)},
                {"warning", e->warning}};
    };
    put("mc", row.mc);
    put("is", row.is);
    j["asymptotics_error"] = row.asymptotics.error;
    j["error"] = row.error;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

// ---- compare -------------------------------------------------------------

struct CompareRow {
  double mu;
  std::optional<std::size_t> agent;  // nullopt: mean over agents
  double ln_p_a;
  double ln_p_b;
  double rate_a;
  double rate_b;
  std::string error;

  double difference() const { return ln_p_a - ln_p_b; }
};

/// ln P per (mu, agent) under the two configured rules, each mu block closed
/// by the log of the arithmetic mean of the agents' probabilities.
inline std::vector<CompareRow> run_compare(const ExperimentConfig& cfg) {
  if (cfg.compare.size() != 2) throw ConfigError("/compare", "two combination rules are required");
  const auto ra = run_asymptotics(cfg, cfg.compare[0]);
  const auto rb = run_asymptotics(cfg, cfg.compare[1]);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<CompareRow> rows;
  const std::size_t n_agents = cfg.agents.size();
  for (std::size_t j = 0; j < cfg.mu_grid.size(); ++j) {
    std::vector<double> la;
    std::vector<double> lb;
    bool all_ok = true;
    for (std::size_t q = 0; q < n_agents; ++q) {
      const auto& a = ra[j * n_agents + q];
      const auto& b = rb[j * n_agents + q];
      std::string error = a.error;
      if (!b.error.empty()) error += (error.empty() ? "" : "; ") + b.error;
      all_ok = all_ok && error.empty();
      la.push_back(a.ln_p_asym);
      lb.push_back(b.ln_p_asym);
      rows.push_back({a.mu, a.agent, a.ln_p_asym, b.ln_p_asym, a.rate, b.rate, error});
    }
    const auto& first_a = ra[j * n_agents];
    const auto& first_b = rb[j * n_agents];
    if (all_ok) {
      rows.push_back({cfg.mu_grid[j], std::nullopt, log_mean_exp(la), log_mean_exp(lb), first_a.rate, first_b.rate,
                      {}});
    } else {
      rows.push_back({cfg.mu_grid[j], std::nullopt, nan, nan, first_a.rate, first_b.rate,
                      "mean undefined: failed cells in this block"});
    }
  }
  return rows;
}

inline std::string render_csv(const std::vector<CompareRow>& rows) {
  std::string out = "mu,agent,ln_p_a,ln_p_b,diff,rate_a,rate_b,error\n";
  for (const auto& r : rows) {
    out += format_number(r.mu) + "," + (r.agent ? std::to_string(*r.agent) : std::string("mean"));
    for (double v : {r.ln_p_a, r.ln_p_b, r.difference(), r.rate_a, r.rate_b}) out += "," + format_number(v);
    out += "," + detail::csv_field(r.error) + "\n";
  }
  return out;
}

inline std::string render_json(const std::vector<CompareRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    j["mu"] = r.mu;
    if (r.agent) {
      j["agent"] = *r.agent;
    } else {
      j["agent"] = "mean";
    }
    j["ln_p_a"] = detail::json_number(r.ln_p_a);
    j["ln_p_b"] = detail::json_number(r.ln_p_b);
    j["diff"] = detail::json_number(r.difference());
    j["rate_a"] = detail::json_number(r.rate_a);
    j["rate_b"] = detail::json_number(r.rate_b);
    j["error"] = r.error;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

// ---- cell status ---------------------------------------------------------

inline bool all_failed(const std::vector<AsymptoticReport>& rows) {
  for (const auto& r : rows)
    if (r.ok()) return false;
  return true;
}

inline bool all_failed(const std::vector<EstimateRow>& rows) {
  for (const auto& r : rows)
    if (r.ok()) return false;
  return true;
}

inline bool all_failed(const std::vector<CompareRow>& rows) {
  for (const auto& r : rows)
    if (r.agent && r.error.empty()) return false;
  return true;
}

}  // namespace diffdet
