#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>

#include "weakfind/commands.hpp"

int main(int argc, char** argv) {
  using namespace weakfind;
  CLI::App app{"weakfind: locate weakened regions of a structure from load/measurement pairs"};
  app.require_subcommand(1);
  std::string config_path;
  unsigned threads = 0;
  long long seed = -1;
  app.add_option("--threads", threads, "worker thread cap (default: all cores)");
  app.add_option("--seed", seed, "random seed, overrides the config value")->check(CLI::NonNegativeNumber);

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const ProjectConfig&);
  };
  const Command commands[] = {
      {"forward", "solve every load case and export displacements and strains", cmd_forward},
      {"synth", "synthesize measurements from a target strength field", cmd_synth},
      {"invert", "recover the strength field from measurements", cmd_invert},
      {"plan-sensors", "sensitivity analysis and greedy sensor selection", cmd_plan_sensors},
      {"plan-loads", "greedy load case selection", cmd_plan_loads},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "project config file")->required();
    sub->add_option("--threads", threads, "worker thread cap (default: all cores)");
    sub->add_option("--seed", seed, "random seed, overrides the config value")->check(CLI::NonNegativeNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Error& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_input;
  }

  try {
    set_max_threads(threads);
    ProjectConfig cfg = load_config(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    for (const auto& c : commands)
      if (app.got_subcommand(c.name)) return c.run(cfg);
  } catch (const InputError& e) {
    std::cerr << "weakfind: input error: " << e.what() << '\n';
    return exit_input;
  } catch (const SolverError& e) {
    std::cerr << "weakfind: solver error: " << e.what() << '\n';
    return exit_solver;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "weakfind: input error: " << e.what() << '\n';
    return exit_input;
  } catch (const std::exception& e) {
    std::cerr << "weakfind: error: " << e.what() << '\n';
    return exit_solver;
  }
  return exit_input;
}
