#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "tica/preprocess.hpp"

namespace tica::cli {

enum class Method { dual_regression, fast, subspace, exact };

Method parse_method(const std::string& name);
std::string method_name(Method m);

// One experiment: the data-generation fields plus fitting and plumbing
// options. Loaded from JSON; unknown keys are rejected so typos cannot
// silently fall back to defaults.
struct RunConfig {
  std::string sim;     // "A" | "B" | "C"
  int n_train = 0;     // training subjects (one run each)
  int n_test = 0;      // test subjects
  long t_train = 0;    // time points per training run
  long t_test = 0;     // time points per test session
  int n_sessions = 1;  // test sessions per subject (1 or 2)
  double snr = 0.0;    // 0 selects the per-sim default (A/B 0.5, C 1.0)
  std::uint64_t seed = 0;
  int m = 3;                // MoG components per nuisance source
  int q_prime_policy = -1;  // -1 auto, else pinned nuisance count
  Method method = Method::fast;
  Scaling scaling = Scaling::temporal_sd;
  double var_scale = 0.5;  // between-subject variance per unit |mean|
  bool reestimate_nuisance = false;
  int n_restarts = 5;  // infomax restarts (fast engine)
  std::string template_dir = "template";  // template consumed by fit
  std::string output_dir;                 // run directory
  int threads = 0;
};

// Command-line flags that take precedence over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> method;
  std::optional<std::string> out;
};

// Parses and validates; every failure is a ConfigError naming the field.
RunConfig load_run_config(const std::string& path, const Overrides& ov);

}  // namespace tica::cli
