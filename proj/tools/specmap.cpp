#include <CLI11.hpp>

#include <cstdint>
#include <string>

#include "cli_commands.hpp"
#include "specmap/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"specmap: spectral MAP estimation experiments"};
  app.set_version_flag("--version", SPECMAP_VERSION);
  app.require_subcommand(1);

  specmap::cli::CommandOptions opts;
  std::uint64_t seed = 0;
  long long replicates = 0;
  int threads = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", opts.out_path, "output path")->required();
    sub->add_option("--seed", seed, "override config seed");
    sub->add_option("--replicates", replicates, "override config replicates");
    sub->add_option("--threads", threads, "override config threads");
  };

  auto* map = app.add_subcommand("map", "closed-form MAP estimate from data");
  add_common(map);
  map->add_option("--y", opts.y_path, "coefficient data file");
  map->add_flag("--synthesize", opts.synthesize, "draw y from the configured source truth");
  map->add_flag("--check", opts.check, "cross-check against the numeric minimizer");

  auto* rate = app.add_subcommand("rate", "convergence-rate sweep over the b grid");
  add_common(rate);

  auto* smallball = app.add_subcommand("smallball", "small-ball probability ratios");
  add_common(smallball);

  auto* diagnose = app.add_subcommand("diagnose", "equivalence, Lipschitz and witness report");
  add_common(diagnose);

  CLI11_PARSE(app, argc, argv);

  for (auto* sub : {map, rate, smallball, diagnose}) {
    if (sub->parsed()) {
      if (sub->count("--seed")) opts.seed = seed;
      if (sub->count("--replicates")) opts.replicates = replicates;
      if (sub->count("--threads")) opts.threads = threads;
    }
  }

  if (map->parsed()) return specmap::cli::cmd_map(opts);
  if (rate->parsed()) return specmap::cli::cmd_rate(opts);
  if (smallball->parsed()) return specmap::cli::cmd_smallball(opts);
  if (diagnose->parsed()) return specmap::cli::cmd_diagnose(opts);
  return specmap::cli::kExitValidation;
}
