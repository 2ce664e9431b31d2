// Command-line driver for the staged inversion pipeline.
#include "luq/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Learning-based inversion of time-series data", "luq"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool quiet = false;

  std::vector<std::pair<std::string, std::string>> commands{
      {"generate", "simulate or load the predicted and observed ensembles"},
      {"filter", "fit adaptive splines and sample them at the filter times"},
      {"dynamics", "cluster predicted series, select and apply a classifier"},
      {"qoi", "learn per-cluster quantities of interest by kernel PCA"},
      {"invert", "estimate density ratios, cluster weights and update weights"},
      {"metrics", "densities, TV table and diagnostics"},
      {"all", "run every stage in order"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "seed (overrides the config)");
    sub->add_flag("--quiet", quiet, "silence warnings");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    luq::PipelineConfig cfg = luq::load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    for (CLI::App* sub : app.get_subcommands()) {
      if (sub->count("--seed") > 0) cfg.seed = seed;
    }
    luq::set_warnings_enabled(!quiet);
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "all") {
      luq::run_all(cfg, std::cout);
    } else {
      luq::run_stage(luq::stage_from_string(name), cfg, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return luq::exit_code_for(e);
  }
  return 0;
}
