// pdmp: run one experiment from a config file, or replay a manifest.
//
//   pdmp converge --config gene.cfg --seed 7 --out runs/converge
//   pdmp replay --manifest runs/converge/manifest.json --out runs/check
//
// Exit status: 0 all verdicts pass, 1 a verdict failed, 2 execution error.
// PDMP_WORKERS overrides the worker count; outputs do not depend on it.

#include <cstdint>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pdmp/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"PDMP simulation and verification toolkit"};
  app.require_subcommand(1);

  std::string config, out = "out", manifest;
  std::uint64_t seed = 0;
  std::size_t replicas = 0;
  std::vector<std::string> budget;

  const std::map<std::string, std::string> about = {
      {"simulate-chain", "embedded jump chain trajectory"},
      {"simulate-pdmp", "jump times and the interpolated path on a grid"},
      {"derive-constants", "drift, contraction and coupling constants"},
      {"check-assumptions", "Monte Carlo checks of the model assumptions"},
      {"verify-coupling", "drift, contraction and marginals of the coupled kernel"},
      {"fm-distance", "FM distance between two simulated ensembles"},
      {"invariant", "invariant measure estimates of the chain and the process"},
      {"relation-gw", "invariant laws related through G and W; P = GW"},
      {"slln-chain", "running averages along the chain"},
      {"slln-pdmp", "time averages along the process, martingale increments"},
      {"short-time", "first-order expansion of the semigroup for small t"},
      {"converge", "geometric convergence of two ensembles"},
      {"operon-demo", "gene expression demo: invariant histograms, averages, convergence"},
  };
  for (const auto& name : pdmp::command_names()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", config, "configuration file")->required();
    sub->add_option("--seed", seed, "master seed (overrides run.seed)");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--replicas", replicas, "shorthand for --budget replicas=N");
    sub->add_option("--budget", budget, "budget override key=value (repeatable)");
  }
  auto* rep = app.add_subcommand("replay", "rerun a manifest and compare output digests");
  rep->add_option("--manifest", manifest, "manifest.json of an earlier run")->required();
  rep->add_option("--out", out, "output directory for the rerun");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  if (cmd == "replay") return pdmp::replay(manifest, out, std::cerr);

  pdmp::LoadedConfig cfg;
  try {
    cfg = pdmp::load_config(config);
    if (replicas > 0) cfg.budget.set("replicas", {static_cast<double>(replicas)});
    for (const auto& b : budget) cfg.budget.set_override(b);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  const auto* sub = app.get_subcommands().front();
  const std::uint64_t s = sub->count("--seed") ? seed : cfg.seed;
  return pdmp::run_command(cmd, cfg, s, out, std::cerr);
}
