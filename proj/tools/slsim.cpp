#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "slsim/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Sidelink platoon capacity simulator"};
  app.set_version_flag("--version", slsim::version_string());

  std::string config_path;
  std::string preset;
  std::string output;
  std::string format;
  int workers = 0;
  int verbosity = 0;
  bool trace = false;
  bool resume = false;

  app.add_option("config", config_path, "Experiment config file (key = value lines)");
  app.add_option("-p,--preset", preset, "Override the preset")
      ->check(CLI::IsMember({"plr-curves", "capacity-vs-lambda_b", "capacity-vs-platoon-size",
                             "capacity-vs-latency", "single-run"}));
  app.add_option("-o,--output", output, "Output file");
  app.add_option("-f,--format", format, "Output format")->check(CLI::IsMember({"csv", "jsonl"}));
  app.add_option("-j,--workers", workers, "Parallel runs (default $SLSIM_WORKERS or 1)")
      ->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", verbosity, "Progress on stderr (repeat for more)");
  app.add_flag("--trace", trace, "Write the per-slot trace of single runs next to the output");
  app.add_flag("--resume", resume, "Keep completed sweep values from an earlier run of the same config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  slsim::ExperimentSpec spec;
  try {
    spec = config_path.empty() ? slsim::parse_config("", "<defaults>") : slsim::load_config(config_path);
    if (!preset.empty()) spec.preset = *slsim::parse_preset(preset);
    if (!output.empty()) spec.output_path = output;
    if (!format.empty()) spec.format = format == "csv" ? slsim::OutputFormat::Csv : slsim::OutputFormat::Jsonl;
    if (workers > 0) {
      spec.search.workers = workers;
    } else if (const char* env = std::getenv("SLSIM_WORKERS")) {
      const int w = std::atoi(env);
      if (w < 1) throw slsim::ConfigError("SLSIM_WORKERS must be a positive integer");
      spec.search.workers = w;
    }
    slsim::validate_spec(spec);
  } catch (const slsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  slsim::RunControl control;
  control.verbosity = verbosity;
  control.log = &std::cerr;
  control.trace = trace;
  control.resume = resume;
  try {
    slsim::run_experiment(spec, control);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  if (verbosity > 0) std::cerr << "wrote " << spec.output_path << '\n';
  return 0;
}
