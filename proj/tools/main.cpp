#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <string>

#include "commands.hpp"
#include "run_config.hpp"
#include "tica/common.hpp"

namespace {

using tica::cli::Overrides;
using tica::cli::RunConfig;

int run_command(const std::string& name, const RunConfig& cfg) {
  if (name == "simulate") tica::cli::cmd_simulate(cfg);
  else if (name == "build-template") tica::cli::cmd_build_template(cfg);
  else if (name == "fit") tica::cli::cmd_fit(cfg);
  else tica::cli::cmd_evaluate(cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source separation with empirical population priors"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string method, out;
  const struct { const char* name; const char* desc; } specs[] = {
      {"simulate", "Generate a synthetic cohort into a run directory"},
      {"build-template", "Estimate the population template from train/"},
      {"fit", "Fit each test session with the configured method"},
      {"evaluate", "Write accuracy and reliability report tables"},
  };
  for (const auto& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.desc);
    sub->add_option("--config", config_path, "Run configuration JSON")
        ->required();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", threads, "Worker pool cap (0 = hardware)");
    sub->add_option("--method", method,
                    "dual_regression | fast | subspace | exact");
    sub->add_option("--out", out, "Run directory (overrides output_dir)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  Overrides ov;
  if (sub->count("--seed") > 0) ov.seed = seed;
  if (sub->count("--threads") > 0) ov.threads = threads;
  if (sub->count("--method") > 0) ov.method = method;
  if (sub->count("--out") > 0) ov.out = out;

  try {
    const RunConfig cfg = tica::cli::load_run_config(config_path, ov);
    return run_command(sub->get_name(), cfg);
  } catch (const tica::ConfigError& e) {
    tica::log_error(e.what());
    return 2;
  } catch (const tica::SpaceTooLarge& e) {
    tica::log_error(e.what());
    return 2;
  } catch (const tica::DegenerateInput& e) {
    tica::log_error(e.what());
    return 3;
  } catch (const tica::DimensionMismatch& e) {
    tica::log_error(e.what());
    return 3;
  } catch (const tica::InconsistentCohort& e) {
    tica::log_error(e.what());
    return 3;
  } catch (const tica::PerturbationOutOfGrid& e) {
    tica::log_error(e.what());
    return 3;
  } catch (const tica::MissingArtifact& e) {
    tica::log_error(e.what());
    return 4;
  } catch (const tica::IoError& e) {
    tica::log_error(e.what());
    return 4;
  } catch (const tica::FormatError& e) {
    tica::log_error(e.what());
    return 4;
  } catch (const std::exception& e) {
    tica::log_error(e.what());
    return 5;
  }
}
