// Batch front end: load a config, apply overrides, run, write artifacts.

#include "mcca/config.hpp"
#include "mcca/runner.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <thread>

int main(int argc, char** argv) {
  CLI::App app{"mcca_sim: cooperative MIMO sensor network simulator"};

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string sweep;
  std::string modes;
  bool compare = false;
  bool trace = false;
  bool dump_only = false;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  app.add_option("-c,--config", config_path, "key = value config file")->required()->check(CLI::ExistingFile);
  app.add_option("-s,--seed", seed, "run a single seed (overrides run.seeds)");
  app.add_option("-o,--out", out_dir, "output directory (overrides output.dir)");
  app.add_option("--sweep", sweep, "sweep values, start:stop:step or a comma list");
  app.add_option("-m,--mode", modes, "comma list of mcca_clss, strategy_game_only, baseline_no_coop, or all");
  app.add_flag("--compare", compare, "write compare.csv (needs mcca_clss and baseline_no_coop)");
  app.add_flag("--trace", trace, "write negotiation traces");
  app.add_option("-j,--jobs", jobs, "engines run concurrently")->check(CLI::PositiveNumber);
  app.add_flag("--dump-config", dump_only, "print the effective config and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    mcca::cli::RunConfig config = mcca::cli::load_config(config_path);
    mcca::cli::apply_env(config);
    if (seed) config.seeds = {*seed};
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (!sweep.empty()) config.sweep_values = mcca::cli::parse_sweep(sweep);
    if (!modes.empty()) config.modes = mcca::cli::parse_modes(modes);
    if (compare) config.compare = true;
    if (trace) config.trace = true;
    config.validate();

    if (dump_only) {
      mcca::cli::dump_config(std::cout, config);
      return 0;
    }
    return mcca::cli::run_command(config, jobs, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "mcca_sim: " << e.what() << '\n';
    return 2;
  }
}
