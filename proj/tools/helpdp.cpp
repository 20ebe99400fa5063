#include <iostream>

#include <CLI11.hpp>

#include "helpdp/cli.hpp"

int main(int argc, char** argv) {
  helpdp::CliOptions options;
  CLI::App app{"Budget-constrained intervention planning pipeline"};
  app.add_option("command", options.command, "Pipeline command")
      ->required()
      ->check(CLI::IsMember(helpdp::cli_commands()));
  app.add_option("--config", options.config, "Run config (JSON)")->required();
  app.add_option("--seed", options.seed, "Top-level seed (overrides config)");
  auto* budget = app.add_option("--budget", options.budget, "Usage budget C");
  auto* r = app.add_option("--r", options.r, "Intervention cost r");
  budget->excludes(r);
  app.add_option("--variant", options.variant, "Threshold rule")
      ->check(CLI::IsMember({"paper_literal", "value_consistent"}));
  app.add_option("--out", options.out, "Output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : helpdp::kExitUsage;
  }
  return helpdp::run_command(options, std::cout, std::cerr);
}
