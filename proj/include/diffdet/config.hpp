#pragma once

// JSON experiment configuration. Validation failures raise ConfigError
// carrying a JSON-pointer style path to the offending field.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "diffdet/asymptotics.hpp"
#include "diffdet/errors.hpp"
#include "diffdet/network.hpp"
#include "diffdet/statmodel.hpp"

namespace diffdet {

class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error("config error at " + (path.empty() ? std::string("/") : path) + ": " + message),
        path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

using AnyModel = std::variant<LaplaceShiftModel, GaussianShiftModel>;

enum class CombinationRule { Metropolis, UniformAveraging, Explicit };

struct RuleSpec {
  CombinationRule rule = CombinationRule::Metropolis;
  Matrix matrix;  // only for Explicit
};

struct OutputSpec {
  std::string path;  // empty: standard output
  std::string format = "csv";
};

struct ExperimentConfig {
  Topology topology{1, std::vector<Edge>{}};
  RuleSpec combination;
  std::vector<RuleSpec> compare;  // the two rules of the compare command
  AnyModel model = LaplaceShiftModel(0.6);
  TailSpec tail = TailSpec::false_alarm(0.0);
  std::vector<double> mu_grid;
  std::vector<std::size_t> agents;  // resolved: "all" expands to 0..S-1
  std::size_t samples = 100'000;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  double trunc_tol = 1e-12;
  CorrectionVariant correction = CorrectionVariant::Refined;
  bool run_mc = true;
  bool run_is = true;
  OutputSpec output;
};

inline const char* to_string(CombinationRule r) {
  switch (r) {
    case CombinationRule::Metropolis: return "metropolis";
    case CombinationRule::UniformAveraging: return "uniform_averaging";
    case CombinationRule::Explicit: return "explicit";
  }
  return "?";
}

inline CombinationMatrix build_combination(const RuleSpec& spec, const Topology& topology) {
  switch (spec.rule) {
    case CombinationRule::Metropolis: return build_metropolis(topology);
    case CombinationRule::UniformAveraging: return build_uniform_averaging(topology);
    case CombinationRule::Explicit: return CombinationMatrix(spec.matrix, topology);
  }
  throw InvalidArgument("unknown combination rule");
}

inline double model_mean(const AnyModel& model, Hypothesis h) {
  return std::visit([h](const auto& m) { return mean(m, h); }, model);
}

namespace detail {

using nlohmann::json;

class ConfigReader {
 public:
  explicit ConfigReader(std::filesystem::path base) : base_(std::move(base)) {}

  ExperimentConfig read(const json& root) const {
    require_object(root, "");
    check_keys(root, "",
               {"topology", "combination", "compare", "model", "hypothesis", "tail", "mu_grid", "agents", "samples",
                "seed", "threads", "trunc_tol", "correction", "estimators", "output"});
    ExperimentConfig c;
    c.topology = topology(member(root, "", "topology"), "/topology");
    c.combination = root.contains("combination") ? rule(root["combination"], "/combination") : RuleSpec{};
    if (root.contains("compare")) {
      const auto& cmp = root["compare"];
      if (!cmp.is_array() || cmp.size() != 2) throw ConfigError("/compare", "expected an array of two rules");
      for (std::size_t j = 0; j < 2; ++j) c.compare.push_back(rule(cmp[j], "/compare/" + std::to_string(j)));
    }
    for (std::size_t j = 0; j < c.compare.size(); ++j)
      check_rule_fits(c.compare[j], c.topology, "/compare/" + std::to_string(j));
    check_rule_fits(c.combination, c.topology, "/combination");

    c.model = model(member(root, "", "model"), "/model");
    const Hypothesis h = root.contains("hypothesis") ? hypothesis(root["hypothesis"], "/hypothesis") : Hypothesis::H0;
    c.tail = tail(member(root, "", "tail"), "/tail", h);
    const double m = model_mean(c.model, h);
    try {
      c.tail.validate(m);
    } catch (const InvalidArgument& e) {
      throw ConfigError("/tail/gamma", e.what());
    }

    if (root.contains("mu_grid")) {
      const auto& g = root["mu_grid"];
      if (!g.is_array()) throw ConfigError("/mu_grid", "expected an array of numbers");
      for (std::size_t j = 0; j < g.size(); ++j) c.mu_grid.push_back(number(g[j], "/mu_grid/" + std::to_string(j)));
      try {
        validate_mu_grid(c.mu_grid);
      } catch (const InvalidArgument& e) {
        throw ConfigError("/mu_grid", e.what());
      }
    }
    c.agents = agents(root.contains("agents") ? root["agents"] : json("all"), "/agents", c.topology.size());

    if (root.contains("samples")) c.samples = unsigned_integer(root["samples"], "/samples");
    if (root.contains("seed")) c.seed = unsigned_integer(root["seed"], "/seed");
    if (root.contains("threads")) {
      const auto t = unsigned_integer(root["threads"], "/threads");
      if (t == 0 || t > 1024) throw ConfigError("/threads", "must lie in [1, 1024]");
      c.threads = static_cast<unsigned>(t);
    }
    if (root.contains("trunc_tol")) {
      c.trunc_tol = number(root["trunc_tol"], "/trunc_tol");
      if (!(c.trunc_tol > 0.0 && c.trunc_tol < 1.0)) throw ConfigError("/trunc_tol", "must lie in (0, 1)");
    }
    if (root.contains("correction")) {
      const auto v = string(root["correction"], "/correction");
      if (v == "plain") {
        c.correction = CorrectionVariant::Plain;
      } else if (v != "refined") {
        throw ConfigError("/correction", "expected \"plain\" or \"refined\"");
      }
    }
    if (root.contains("estimators")) {
      const auto& e = root["estimators"];
      if (!e.is_array()) throw ConfigError("/estimators", "expected an array containing \"mc\" and/or \"is\"");
      c.run_mc = c.run_is = false;
      for (std::size_t j = 0; j < e.size(); ++j) {
        const auto v = string(e[j], "/estimators/" + std::to_string(j));
        if (v == "mc") {
          c.run_mc = true;
        } else if (v == "is") {
          c.run_is = true;
        } else {
          throw ConfigError("/estimators/" + std::to_string(j), "expected \"mc\" or \"is\"");
        }
      }
    }
    if (root.contains("output")) {
      const auto& o = root["output"];
      require_object(o, "/output");
      check_keys(o, "/output", {"path", "format"});
      if (o.contains("path")) c.output.path = string(o["path"], "/output/path");
      if (o.contains("format")) c.output.format = format(o["format"], "/output/format");
    }
    return c;
  }

  static std::string format(const json& j, const std::string& path) {
    const auto v = string(j, path);
    if (v != "csv" && v != "json") throw ConfigError(path, "expected \"csv\" or \"json\"");
    return v;
  }

 private:
  std::filesystem::path base_;

  static void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
  }

  static void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool known = false;
      for (const char* a : allowed) known = known || it.key() == a;
      if (!known) throw ConfigError(path + "/" + it.key(), "unknown field");
    }
  }

  static const json& member(const json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) throw ConfigError(path + "/" + key, "missing required field");
    return j.at(key);
  }

  static double number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
    return v;
  }

  static std::uint64_t unsigned_integer(const json& j, const std::string& path) {
    if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0))
      throw ConfigError(path, "expected a non-negative integer");
    return j.get<std::uint64_t>();
  }

  static std::string string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path, "expected a string");
    return j.get<std::string>();
  }

  static std::vector<Edge> edges(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of [k, l] pairs");
    std::vector<Edge> out;
    for (std::size_t e = 0; e < j.size(); ++e) {
      const std::string p = path + "/" + std::to_string(e);
      if (!j[e].is_array() || j[e].size() != 2) throw ConfigError(p, "expected a pair [k, l]");
      out.emplace_back(unsigned_integer(j[e][0], p + "/0"), unsigned_integer(j[e][1], p + "/1"));
    }
    return out;
  }

  static Topology build_topology(std::uint64_t s, const std::vector<Edge>& e, const std::string& path) {
    try {
      return Topology(s, e);
    } catch (const InvalidArgument& err) {
      throw ConfigError(path, err.what());
    }
  }

  Topology topology(const json& j, const std::string& path) const {
    require_object(j, path);
    check_keys(j, path, {"generator", "S", "edges", "file"});
    Topology t{1, std::vector<Edge>{}};
    if (j.contains("file")) {
      if (j.contains("generator")) throw ConfigError(path, "give either \"file\" or \"generator\", not both");
      const auto file = base_ / string(j["file"], path + "/file");
      std::ifstream in(file);
      if (!in) throw ConfigError(path + "/file", "cannot open " + file.string());
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError(path + "/file", file.string() + ": " + e.what());
      }
      require_object(doc, path + "/file");
      const auto s = unsigned_integer(member(doc, path + "/file", "S"), path + "/file/S");
      t = build_topology(s, edges(member(doc, path + "/file", "edges"), path + "/file/edges"), path + "/file");
    } else {
      const auto gen = string(member(j, path, "generator"), path + "/generator");
      if (gen == "reference") {
        t = topologies::reference();
      } else {
        const auto s = unsigned_integer(member(j, path, "S"), path + "/S");
        if (s == 0 || s > 4096) throw ConfigError(path + "/S", "must lie in [1, 4096]");
        if (gen == "ring") {
          t = topologies::ring(s);
        } else if (gen == "star") {
          t = topologies::star(s);
        } else if (gen == "path") {
          t = topologies::path(s);
        } else if (gen == "full") {
          t = topologies::full(s);
        } else if (gen == "custom") {
          t = build_topology(s, edges(member(j, path, "edges"), path + "/edges"), path + "/edges");
        } else {
          throw ConfigError(path + "/generator",
                            "unknown generator \"" + gen + "\" (ring, star, path, full, reference, custom)");
        }
      }
    }
    if (!t.connected()) throw ConfigError(path, "topology must be connected");
    return t;
  }

  static RuleSpec rule(const json& j, const std::string& path) {
    require_object(j, path);
    check_keys(j, path, {"rule", "matrix"});
    RuleSpec r;
    const auto name = string(member(j, path, "rule"), path + "/rule");
    if (name == "metropolis") {
      r.rule = CombinationRule::Metropolis;
    } else if (name == "uniform_averaging") {
      r.rule = CombinationRule::UniformAveraging;
    } else if (name == "explicit") {
      r.rule = CombinationRule::Explicit;
      const auto& m = member(j, path, "matrix");
      if (!m.is_array() || m.empty()) throw ConfigError(path + "/matrix", "expected a square array of rows");
      const auto s = static_cast<Eigen::Index>(m.size());
      r.matrix.resize(s, s);
      for (Eigen::Index k = 0; k < s; ++k) {
        const std::string rp = path + "/matrix/" + std::to_string(k);
        if (!m[k].is_array() || static_cast<Eigen::Index>(m[k].size()) != s)
          throw ConfigError(rp, "expected a row of length " + std::to_string(s));
        for (Eigen::Index l = 0; l < s; ++l) r.matrix(k, l) = number(m[k][l], rp + "/" + std::to_string(l));
      }
    } else {
      throw ConfigError(path + "/rule", "unknown rule \"" + name + "\" (metropolis, uniform_averaging, explicit)");
    }
    if (r.rule != CombinationRule::Explicit && j.contains("matrix"))
      throw ConfigError(path + "/matrix", "only allowed with rule \"explicit\"");
    return r;
  }

  static void check_rule_fits(const RuleSpec& r, const Topology& t, const std::string& path) {
    if (r.rule != CombinationRule::Explicit) return;
    try {
      (void)build_combination(r, t);
    } catch (const Error& e) {
      throw ConfigError(path + "/matrix", e.what());
    }
  }

  static AnyModel model(const json& j, const std::string& path) {
    require_object(j, path);
    const auto type = string(member(j, path, "type"), path + "/type");
    try {
      if (type == "laplace") {
        check_keys(j, path, {"type", "rho"});
        const double rho = number(member(j, path, "rho"), path + "/rho");
        if (!(rho > 0.0)) throw ConfigError(path + "/rho", "must be positive");
        return LaplaceShiftModel(rho);
      }
      if (type == "gaussian") {
        check_keys(j, path, {"type", "mean0", "mean1", "variance"});
        const double var = number(member(j, path, "variance"), path + "/variance");
        if (!(var > 0.0)) throw ConfigError(path + "/variance", "must be positive");
        return GaussianShiftModel(number(member(j, path, "mean0"), path + "/mean0"),
                                  number(member(j, path, "mean1"), path + "/mean1"), var);
      }
    } catch (const InvalidArgument& e) {
      throw ConfigError(path, e.what());
    }
    throw ConfigError(path + "/type", "unknown model \"" + type + "\" (laplace, gaussian)");
  }

  static Hypothesis hypothesis(const json& j, const std::string& path) {
    const auto v = string(j, path);
    if (v == "H0") return Hypothesis::H0;
    if (v == "H1") return Hypothesis::H1;
    throw ConfigError(path, "expected \"H0\" or \"H1\"");
  }

  static TailSpec tail(const json& j, const std::string& path, Hypothesis h) {
    require_object(j, path);
    check_keys(j, path, {"gamma", "direction"});
    TailSpec t{number(member(j, path, "gamma"), path + "/gamma"),
               h == Hypothesis::H0 ? TailDirection::Upper : TailDirection::Lower, h};
    if (j.contains("direction")) {
      const auto d = string(j["direction"], path + "/direction");
      if (d == "upper") {
        t.direction = TailDirection::Upper;
      } else if (d == "lower") {
        t.direction = TailDirection::Lower;
      } else {
        throw ConfigError(path + "/direction", "expected \"upper\" or \"lower\"");
      }
    }
    return t;
  }

  static std::vector<std::size_t> agents(const json& j, const std::string& path, std::size_t s) {
    std::vector<std::size_t> out;
    if (j.is_string()) {
      if (j.get<std::string>() != "all") throw ConfigError(path, "expected \"all\" or an array of agent indices");
      for (std::size_t k = 0; k < s; ++k) out.push_back(k);
      return out;
    }
    if (!j.is_array() || j.empty()) throw ConfigError(path, "expected \"all\" or a non-empty array of agent indices");
    for (std::size_t e = 0; e < j.size(); ++e) {
      const auto k = unsigned_integer(j[e], path + "/" + std::to_string(e));
      if (k >= s) throw ConfigError(path + "/" + std::to_string(e), "agent index out of range");
      out.push_back(k);
    }
    return out;
  }
};

/// 1-based line and column of a byte offset.
inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t offset) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

}  // namespace detail

/// Parses config text. Relative file references resolve against `base`.
inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base = ".") {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte is one past the offending character
    const auto [line, column] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    std::ostringstream os;
    os << "malformed JSON at line " << line << ", column " << column;
    throw ConfigError("", os.str());
  }
  return detail::ConfigReader(base).read(root);
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open config file " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), file.has_parent_path() ? file.parent_path() : std::filesystem::path("."));
}

}  // namespace diffdet
