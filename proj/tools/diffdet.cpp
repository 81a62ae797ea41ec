// Command-line front end: parses flags, loads the config and writes what the
// experiment functions render.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "diffdet/config.hpp"
#include "diffdet/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfigError = 2;
constexpr int kAllCellsFailed = 3;

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::string format;
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw diffdet::Error("cannot write " + path);
  f << text;
}

template <class Rows>
int finish(const Rows& rows, const std::string& format, const std::string& out) {
  emit(format == "json" ? diffdet::render_json(rows) : diffdet::render_csv(rows), out);
  return diffdet::all_failed(rows) ? kAllCellsFailed : kOk;
}

int run(const std::string& command, const Flags& flags) {
  diffdet::ExperimentConfig cfg = diffdet::load_config(flags.config);
  if (flags.seed) cfg.seed = flags.seed;
  if (flags.samples) cfg.samples = *flags.samples;
  if (!flags.format.empty()) cfg.output.format = flags.format;
  const std::string out = flags.out.empty() ? cfg.output.path : flags.out;

  if (command == "topology-info") {
    const auto info = diffdet::topology_info(cfg);
    emit(cfg.output.format == "json" ? diffdet::render_json(info) : diffdet::render_text(info), out);
    return kOk;
  }
  if (command == "asymptotics") return finish(diffdet::run_asymptotics(cfg), cfg.output.format, out);
  if (command == "estimate") return finish(diffdet::run_estimate(cfg), cfg.output.format, out);
  return finish(diffdet::run_compare(cfg), cfg.output.format, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact asymptotics and Monte Carlo estimates of diffusion-network error probabilities"};
  app.require_subcommand(1);
  Flags flags;
  for (const char* name : {"topology-info", "asymptotics", "estimate", "compare"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", flags.config, "experiment config (JSON)")->required();
    sub->add_option("--out", flags.out, "output file, standard output when omitted");
    sub->add_option("--seed", flags.seed, "root seed, overrides the config");
    sub->add_option("--samples", flags.samples, "samples per estimator and cell, overrides the config");
    sub->add_option("--format", flags.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, flags);
  } catch (const diffdet::ConfigError& e) {
    std::cerr << "diffdet: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "diffdet: " << e.what() << "\n";
    return kFailure;
  }
}
