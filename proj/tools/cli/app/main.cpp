#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "hfz/cli/commands.hpp"
#include "hfz/common/log.hpp"

int main(int argc, char** argv) {
  using namespace hfz::cli;

  CLI::App app{"hfz: hybrid fuzzing pipeline for minivm programs"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<unsigned> jobs;
  bool verbose = false;
  app.add_option("--config", config_path, "pipeline configuration file (default ./hfz.ini)");
  app.add_option("--seed", seed, "RNG seed");
  app.add_option("--output", output, "output root directory");
  app.add_option("--jobs", jobs, "worker threads for parallel stages");
  app.add_flag("-v,--verbose", verbose, "debug logging");

  struct Stage {
    const char* name;
    const char* help;
    int (*fn)(const PipelineConfig&, std::ostream&, std::ostream&);
  };
  const Stage stages[] = {
      {"run", "hybrid fuzzing session", cmd_run},
      {"cmin", "minimize the session corpus", cmd_cmin},
      {"security", "security predicate analysis on sampled seeds", cmd_security},
      {"triage", "crash reports, dedup and clustering", cmd_triage},
      {"cov-report", "corpus coverage report", cmd_cov_report},
  };
  for (const auto& s : stages) app.add_subcommand(s.name, s.help);

  CLI11_PARSE(app, argc, argv);
  hfz::log::set_level(verbose ? hfz::log::Level::Debug : hfz::log::Level::Info);

  PipelineConfig config;
  try {
    if (config_path.empty() && std::filesystem::exists("hfz.ini")) config_path = "hfz.ini";
    if (!config_path.empty()) config = load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "hfz: " << e.what() << "\n";
    return kError;
  }
  if (seed) config.campaign.seed = *seed;
  if (output) config.output_root = *output;
  if (jobs) config.campaign.jobs = *jobs;

  for (const auto& s : stages) {
    if (app.got_subcommand(s.name)) return s.fn(config, std::cout, std::cerr);
  }
  return kError;
}
