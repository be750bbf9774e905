#include "run_config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

#include "tica/common.hpp"

namespace tica::cli {

using nlohmann::json;

Method parse_method(const std::string& name) {
  if (name == "dual_regression") return Method::dual_regression;
  if (name == "fast") return Method::fast;
  if (name == "subspace") return Method::subspace;
  if (name == "exact") return Method::exact;
  throw ConfigError("config field 'method': expected dual_regression, fast, "
                    "subspace or exact, got '" +
                    name + "'");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::dual_regression: return "dual_regression";
    case Method::fast: return "fast";
    case Method::subspace: return "subspace";
    case Method::exact: return "exact";
  }
  return "";
}

namespace {

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "': " + why);
}

long get_int(const json& j, const std::string& field, long lo, long hi) {
  const auto& v = j.at(field);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    bad_field(field, "expected an integer");
  const long x = v.get<long>();
  if (x < lo || x > hi)
    bad_field(field, "out of range [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
  return x;
}

double get_pos_real(const json& j, const std::string& field) {
  const auto& v = j.at(field);
  if (!v.is_number()) bad_field(field, "expected a number");
  const double x = v.get<double>();
  if (!(x > 0.0)) bad_field(field, "must be positive");
  return x;
}

std::string get_string(const json& j, const std::string& field) {
  const auto& v = j.at(field);
  if (!v.is_string()) bad_field(field, "expected a string");
  return v.get<std::string>();
}

}  // namespace

RunConfig load_run_config(const std::string& path, const Overrides& ov) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not readable: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse failure in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  static const std::set<std::string> known = {
      "sim",        "n_train",      "n_test",
      "t_train",    "t_test",       "n_sessions",
      "snr",        "seed",         "m",
      "q_prime_policy",             "method",
      "scaling",    "var_scale",    "reestimate_nuisance",
      "n_restarts", "template_dir", "output_dir",
      "threads"};
  for (const auto& item : j.items())
    if (!known.count(item.key())) bad_field(item.key(), "unknown field");

  RunConfig cfg;
  cfg.sim = get_string(j, "sim");
  if (cfg.sim != "A" && cfg.sim != "B" && cfg.sim != "C")
    bad_field("sim", "expected \"A\", \"B\" or \"C\", got \"" + cfg.sim + "\"");

  if (j.contains("n_train"))
    cfg.n_train = static_cast<int>(get_int(j, "n_train", 0, 100000));
  if (j.contains("n_test"))
    cfg.n_test = static_cast<int>(get_int(j, "n_test", 0, 100000));
  if (j.contains("t_train")) cfg.t_train = get_int(j, "t_train", 0, 10000000);
  if (j.contains("t_test")) cfg.t_test = get_int(j, "t_test", 0, 10000000);
  if (j.contains("n_sessions"))
    cfg.n_sessions = static_cast<int>(get_int(j, "n_sessions", 1, 2));
  if (j.contains("snr")) cfg.snr = get_pos_real(j, "snr");
  if (cfg.snr == 0.0) cfg.snr = cfg.sim == "C" ? 1.0 : 0.5;
  if (j.contains("seed")) {
    const auto& v = j.at("seed");
    if (v.is_number_unsigned()) cfg.seed = v.get<std::uint64_t>();
    else if (v.is_number_integer() && v.get<long>() >= 0)
      cfg.seed = static_cast<std::uint64_t>(v.get<long>());
    else bad_field("seed", "expected a nonnegative integer");
  }
  if (j.contains("m")) cfg.m = static_cast<int>(get_int(j, "m", 2, 16));
  if (j.contains("q_prime_policy")) {
    const auto& v = j.at("q_prime_policy");
    if (v.is_string()) {
      if (v.get<std::string>() != "auto")
        bad_field("q_prime_policy", "expected \"auto\" or an integer >= 0");
      cfg.q_prime_policy = -1;
    } else {
      cfg.q_prime_policy =
          static_cast<int>(get_int(j, "q_prime_policy", 0, 64));
    }
  }
  if (j.contains("method")) cfg.method = parse_method(get_string(j, "method"));
  if (j.contains("scaling")) {
    const std::string s = get_string(j, "scaling");
    if (s == "temporal_sd") cfg.scaling = Scaling::temporal_sd;
    else if (s == "image_sd") cfg.scaling = Scaling::image_sd;
    else bad_field("scaling", "expected temporal_sd or image_sd");
  }
  if (j.contains("var_scale")) cfg.var_scale = get_pos_real(j, "var_scale");
  if (j.contains("reestimate_nuisance")) {
    const auto& v = j.at("reestimate_nuisance");
    if (!v.is_boolean()) bad_field("reestimate_nuisance", "expected a boolean");
    cfg.reestimate_nuisance = v.get<bool>();
  }
  if (j.contains("n_restarts"))
    cfg.n_restarts = static_cast<int>(get_int(j, "n_restarts", 1, 64));
  if (j.contains("template_dir")) {
    cfg.template_dir = get_string(j, "template_dir");
    if (cfg.template_dir.empty()) bad_field("template_dir", "must be nonempty");
  }
  if (j.contains("output_dir")) cfg.output_dir = get_string(j, "output_dir");
  if (j.contains("threads"))
    cfg.threads = static_cast<int>(get_int(j, "threads", 0, 4096));

  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.threads) cfg.threads = *ov.threads;
  if (ov.method) cfg.method = parse_method(*ov.method);
  if (ov.out) cfg.output_dir = *ov.out;

  if (cfg.output_dir.empty())
    bad_field("output_dir", "required (in the config or via --out)");
  if (cfg.n_train > 0 && cfg.t_train < 4)
    bad_field("t_train", "must be >= 4 when n_train > 0");
  if (cfg.n_test > 0 && cfg.t_test < 2)
    bad_field("t_test", "must be >= 2 when n_test > 0");
  return cfg;
}

}  // namespace tica::cli
