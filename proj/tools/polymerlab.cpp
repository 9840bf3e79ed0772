#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "polymerlab/harness.hpp"

namespace h = polymerlab::harness;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct Options {
  std::string config;
  h::Overrides cli;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "experiment config (JSON)")->required();
  sub->add_option("--seed", o.cli.seed, "master seed; overrides POLYMERLAB_SEED and the config");
  sub->add_option("--threads", o.cli.threads, "worker threads, 0 for all cores; overrides POLYMERLAB_THREADS");
  sub->add_option("--out", o.cli.out, "output directory");
}

int execute(h::Kind kind, const Options& o) {
  h::ExperimentConfig config;
  try {
    auto tree = h::read_config(o.config);
    h::apply_overrides(tree, h::with_environment(o.cli), kind);
    config = h::validate(tree, kind);
  } catch (const h::ValidationError& e) {
    fmt::print(stderr, "{}\n", e.what());
    return kValidation;
  }
  try {
    const auto manifest = h::run(config);
    for (const auto& f : manifest.files) fmt::print("{}  {}\n", f.sha256, f.name);
    if (manifest.partial()) {
      for (const auto& e : manifest.errors) fmt::print(stderr, "cell {}: {}\n", e.cell, e.message);
      fmt::print(stderr, "{} of the cells failed; outputs are partial (see manifest.json)\n", manifest.errors.size());
      return kRuntime;
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kRuntime;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Directed polymers with heavy-tailed walks: replicated experiments"};
  app.set_version_flag("--version", h::version());
  app.require_subcommand(1);

  Options options;
  std::optional<h::Kind> chosen;
  for (auto kind : h::all_kinds()) {
    auto* sub = app.add_subcommand(h::to_string(kind), fmt::format("run a {} experiment", h::to_string(kind)));
    add_common(sub, options);
    if (kind == h::Kind::bound) {
      sub->add_option("--beta", options.cli.betas, "beta grid")->delimiter(',');
      sub->add_option("--C1", options.cli.C1, "corridor constant");
      sub->add_option("--C2", options.cli.C2, "block-length constant");
      sub->add_option("--theta", options.cli.theta, "fractional exponent");
      sub->add_option("--gamma", options.cli.gamma, "moment exponent");
      sub->add_option("--mc-samples", options.cli.mc_samples, "Monte Carlo paths per estimate");
    }
    sub->callback([&chosen, kind] { chosen = kind; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (e.get_exit_code() == 0) return kOk;
    if (app.get_subcommands().empty() && argc > 1 && std::string(argv[1]).rfind('-', 0) != 0)
      fmt::print(stderr, "unknown experiment kind '{}'\n", argv[1]);
    return code == 0 ? kOk : kValidation;
  }
  return execute(*chosen, options);
}
