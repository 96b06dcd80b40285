// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// orbitmoe run|split|linkbudget|bounds|compare

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "orbitmoe/cli.hpp"

namespace {

std::optional<std::uint64_t> seed_of(const CLI::Option* opt, std::uint64_t value) {
  if (opt->count() == 0) return std::nullopt;
  return value;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = orbitmoe::cli;
  CLI::App app{"Federated mixture-of-experts fine-tuning over a satellite-terrestrial network"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("--quiet", quiet, "Suppress stdout summaries")->configurable(false);

  cli::RunOptions run_opt;
  std::uint64_t run_seed = 0;
  auto* run = app.add_subcommand("run", "Run one experiment and write its artifacts");
  run->add_option("--config", run_opt.config, "Config file")->required();
  run->add_option("--out", run_opt.out, "Output directory")->required();
  auto* run_seed_opt = run->add_option("--seed", run_seed, "Override the config seed");
  run->add_flag("--quiet", quiet);

  cli::SplitOptions split_opt;
  std::uint64_t split_seed = 0;
  auto* split = app.add_subcommand("split", "Relevance estimation and expert splitting only");
  split->add_option("--config", split_opt.config, "Config file")->required();
  split->add_option("--out", split_opt.out, "Optional output directory");
  auto* split_seed_opt = split->add_option("--seed", split_seed, "Override the config seed");
  split->add_flag("--quiet", quiet);

  cli::LinkOptions link_opt;
  auto* link = app.add_subcommand("linkbudget", "Print uplink rate, window bytes and a contact plan preview");
  link->add_option("--config", link_opt.config, "Config file")->required();
  link->add_option("--rows", link_opt.preview_rows, "Contact plan rows to preview (-1 for all)");

  cli::BoundsOptions bounds_opt;
  auto* bounds = app.add_subcommand("bounds", "Tabulate both convergence bounds and the crossover heterogeneity");
  bounds->add_option("--params", bounds_opt.params, "Bound parameter file")->required();
  bounds->add_option("-T,--horizon", bounds_opt.T, "Horizon values (comma separated)")->delimiter(',');

  cli::CompareOptions cmp_opt;
  auto* compare = app.add_subcommand("compare", "Run several schemes over several seeds and report");
  compare->add_option("--config", cmp_opt.config, "Config file or directory of *.cfg files")->required();
  compare->add_option("--schemes", cmp_opt.schemes, "Schemes to run with a single config")->delimiter(',');
  compare->add_option("--seeds", cmp_opt.seeds, "Seeds (comma separated)")->delimiter(',');
  compare->add_option("--seed", cmp_opt.seeds, "Single seed");
  compare->add_option("--out", cmp_opt.out, "Output directory")->required();
  compare->add_flag("--quiet", quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitConfig;
  }

  cli::Io io{std::cout, std::cerr, quiet};
  if (*run) {
    run_opt.seed = seed_of(run_seed_opt, run_seed);
    return cli::cmd_run(run_opt, io);
  }
  if (*split) {
    split_opt.seed = seed_of(split_seed_opt, split_seed);
    return cli::cmd_split(split_opt, io);
  }
  if (*link) return cli::cmd_linkbudget(link_opt, io);
  if (*bounds) return cli::cmd_bounds(bounds_opt, io);
  if (*compare) return cli::cmd_compare(cmp_opt, io);
  return cli::kExitConfig;
}
