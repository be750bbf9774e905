#include "commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "manifest.hpp"
#include "tica/common.hpp"
#include "tica/dim_reduction.hpp"
#include "tica/dual_regression.hpp"
#include "tica/em.hpp"
#include "tica/matrix_io.hpp"
#include "tica/metrics.hpp"
#include "tica/preprocess.hpp"
#include "tica/rng.hpp"
#include "tica/simulate.hpp"
#include "tica/template_prior.hpp"

namespace tica::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Seed stream tags; every (tag, index) pair is an independent stream.
constexpr std::uint64_t kSrcTrain = 11, kSrcTest = 12, kTcTrain = 13,
                        kTcTest = 14, kNoiseTrain = 15, kNoiseTest = 16,
                        kTplTrue = 17, kFitSeed = 18;

// Monte Carlo draws behind the sim-B population template.
constexpr long kSimBTemplateDraws = 2000;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

SourceSpec spec_for(const RunConfig& cfg) {
  if (cfg.sim == "C") return simc_spec();
  return sima_spec();  // A and B share the three-source layout
}

Template true_template(const RunConfig& cfg, const SourceSpec& spec) {
  if (cfg.sim == "B")
    return simb_template(spec, kSimBTemplateDraws,
                         derive_seed(cfg.seed, kTplTrue, 0));
  return population_template(spec, cfg.var_scale);
}

Matrix draw_sources(const RunConfig& cfg, const SourceSpec& spec,
                    const Template& prior_all, std::uint64_t tag, int idx) {
  const std::uint64_t s =
      derive_seed(cfg.seed, tag, static_cast<std::uint64_t>(idx));
  if (cfg.sim == "B") return sample_subject_b(spec, s);
  return sample_subject_a(prior_all, s);
}

Matrix observed_run(const Matrix& sources, long t, double snr,
                    std::uint64_t tc_seed, std::uint64_t noise_seed) {
  const Matrix tc =
      gen_timecourses(t, static_cast<int>(sources.rows()), tc_seed);
  return gen_observed(sources, tc, snr, noise_seed).observed;
}

std::string zero_pad(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

std::string train_rel(int i) { return "train/subject_" + zero_pad(i) + ".bin"; }
std::string truth_rel(int i) { return "truth/subject_" + zero_pad(i) + ".bin"; }
std::string test_rel(int i, int session) {
  return "test/subject_" + zero_pad(i) + "_s" + std::to_string(session) +
         ".bin";
}
std::string fit_rel(const std::string& method, int i, int session) {
  return "fits/" + method + "/subject_" + zero_pad(i) + "_s" +
         std::to_string(session);
}

const char* kTemplateFiles[] = {"meta.json", "mean.bin", "var_between.bin",
                                "var_total.bin", "var_noise.bin"};

void register_template(Manifest& man, const std::string& root,
                       const std::string& dir) {
  for (const char* f : kTemplateFiles) man.add(root, dir + "/" + f);
}

std::string fmt_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

void require_prefix(const Manifest& man, const std::string& prefix,
                    const std::string& hint) {
  if (!man.has_prefix(prefix))
    throw MissingArtifact("no artifacts under " + prefix + "; " + hint);
}

// Subject/session pairs recorded under test/ in the manifest.
std::vector<std::pair<int, int>> test_runs(const Manifest& man) {
  std::vector<std::pair<int, int>> runs;
  for (const auto& [rel, digest] : man.artifacts) {
    (void)digest;
    int i = 0, s = 0;
    if (std::sscanf(rel.c_str(), "test/subject_%d_s%d.bin", &i, &s) == 2)
      runs.emplace_back(i, s);
  }
  std::sort(runs.begin(), runs.end());
  return runs;
}

}  // namespace

void cmd_simulate(const RunConfig& cfg) {
  const std::string root = cfg.output_dir;
  fs::create_directories(root);
  const SourceSpec spec = spec_for(cfg);
  const Template prior_all = population_prior(spec, cfg.var_scale);
  const Template tpl_true = true_template(cfg, spec);
  Manifest man = load_manifest_or_empty(root);

  save_template(root + "/template_true", tpl_true);
  register_template(man, root, "template_true");

  json rec;
  rec["sim"] = cfg.sim;
  rec["n_train"] = cfg.n_train;
  rec["n_test"] = cfg.n_test;
  rec["t_train"] = cfg.t_train;
  rec["t_test"] = cfg.t_test;
  rec["n_sessions"] = cfg.n_sessions;
  rec["snr"] = cfg.snr;
  rec["seed"] = cfg.seed;
  rec["m"] = cfg.m;
  rec["q_prime_policy"] =
      cfg.q_prime_policy < 0 ? json("auto") : json(cfg.q_prime_policy);
  rec["scaling"] =
      cfg.scaling == Scaling::temporal_sd ? "temporal_sd" : "image_sd";
  rec["var_scale"] = cfg.var_scale;
  {
    std::ofstream out(root + "/config.json");
    if (!out) throw IoError("cannot write config.json in " + root);
    out << rec.dump(2) << "\n";
  }
  man.add(root, "config.json");

  if (cfg.n_train > 0) fs::create_directories(root + "/train");
  for (int i = 0; i < cfg.n_train; ++i) {
    const Matrix s = draw_sources(cfg, spec, prior_all, kSrcTrain, i);
    const Matrix x = observed_run(
        s, cfg.t_train, cfg.snr,
        derive_seed(cfg.seed, kTcTrain, static_cast<std::uint64_t>(i)),
        derive_seed(cfg.seed, kNoiseTrain, static_cast<std::uint64_t>(i)));
    io::write_matrix_bin(root + "/" + train_rel(i), x);
    man.add(root, train_rel(i));
    log_debug("simulate: wrote " + train_rel(i));
  }

  if (cfg.n_test > 0) {
    fs::create_directories(root + "/test");
    fs::create_directories(root + "/truth");
  }
  for (int i = 0; i < cfg.n_test; ++i) {
    const Matrix s = draw_sources(cfg, spec, prior_all, kSrcTest, i);
    io::write_matrix_bin(root + "/" + truth_rel(i), s);
    man.add(root, truth_rel(i));
    for (int sess = 1; sess <= cfg.n_sessions; ++sess) {
      const std::uint64_t run_id = static_cast<std::uint64_t>(i) * 2 +
                                   static_cast<std::uint64_t>(sess - 1);
      const Matrix x =
          observed_run(s, cfg.t_test, cfg.snr,
                       derive_seed(cfg.seed, kTcTest, run_id),
                       derive_seed(cfg.seed, kNoiseTest, run_id));
      io::write_matrix_bin(root + "/" + test_rel(i, sess), x);
      man.add(root, test_rel(i, sess));
    }
    log_debug("simulate: wrote test subject " + zero_pad(i));
  }

  save_manifest(root, man);
  log_info("simulate: sim " + cfg.sim + ", " + std::to_string(cfg.n_train) +
           " training and " + std::to_string(cfg.n_test) +
           " test subjects in " + root);
}

void cmd_build_template(const RunConfig& cfg) {
  const std::string root = cfg.output_dir;
  Manifest man = load_manifest(root);
  require_prefix(man, "train/", "run simulate with n_train > 0 first");
  require_prefix(man, "template_true/", "run simulate first");
  man.verify(root, "train/");
  man.verify(root, "template_true/");

  const Template tpl_true = load_template(root + "/template_true");
  std::vector<std::vector<Matrix>> subjects;
  for (const auto& [rel, digest] : man.artifacts) {
    (void)digest;
    int i = 0;
    if (std::sscanf(rel.c_str(), "train/subject_%d.bin", &i) == 1)
      subjects.push_back({io::read_matrix_bin(root + "/" + rel)});
  }
  log_info("build-template: estimating from " +
           std::to_string(subjects.size()) + " training subjects");
  const Template tpl = build_template(subjects, tpl_true.mean, Split::halve,
                                      cfg.scaling, cfg.threads);
  save_template(root + "/template", tpl);
  register_template(man, root, "template");

  std::vector<std::vector<std::string>> rows;
  for (int q = 0; q < tpl.l; ++q) {
    double mean_corr = std::numeric_limits<double>::quiet_NaN();
    double var_corr = std::numeric_limits<double>::quiet_NaN();
    try {
      mean_corr = pearson(tpl.mean.row(q), tpl_true.mean.row(q));
    } catch (const Error&) {
    }
    try {
      var_corr = pearson(tpl.var_between.row(q), tpl_true.var_between.row(q));
    } catch (const Error&) {
    }
    rows.push_back({std::to_string(q), fmt_real(mean_corr),
                    fmt_real(var_corr)});
  }
  write_csv(root + "/template_summary.csv",
            {"component", "mean_corr", "var_between_corr"}, rows);
  man.add(root, "template_summary.csv");
  save_manifest(root, man);
  log_info("build-template: wrote template/ and template_summary.csv");
}

namespace {

struct TimingRow {
  int subject = 0;
  int session = 0;
  double nuisance = 0.0, em = 0.0, reestimate = 0.0, total = 0.0;
};

FitOptions fit_opts(const RunConfig& cfg, int subject, int session) {
  FitOptions o;
  o.m = cfg.m;
  o.n_restarts = cfg.n_restarts;
  o.reestimate_nuisance = cfg.reestimate_nuisance;
  o.q_prime = cfg.q_prime_policy;
  o.scaling = cfg.scaling;
  o.threads = cfg.threads;
  o.seed = derive_seed(cfg.seed, kFitSeed,
                       static_cast<std::uint64_t>(subject) * 2 +
                           static_cast<std::uint64_t>(session - 1));
  return o;
}

void register_fit(Manifest& man, const std::string& root,
                  const std::string& rel, const FitResult& fit) {
  man.add(root, rel + "/meta.json");
  man.add(root, rel + "/template_mean.bin");
  man.add(root, rel + "/template_var.bin");
  if (fit.q_prime > 0) man.add(root, rel + "/nuisance_mean.bin");
}

}  // namespace

void cmd_fit(const RunConfig& cfg) {
  const std::string root = cfg.output_dir;
  Manifest man = load_manifest(root);
  require_prefix(man, "test/", "run simulate with n_test > 0 first");
  require_prefix(man, cfg.template_dir + "/",
                 "run build-template first or point template_dir elsewhere");
  man.verify(root, "test/");
  man.verify(root, cfg.template_dir + "/");

  const Template tpl = load_template(root + "/" + cfg.template_dir);
  const std::string method = method_name(cfg.method);
  const bool enumerated =
      cfg.method == Method::exact || cfg.method == Method::subspace;
  const SpaceKind kind =
      cfg.method == Method::exact ? SpaceKind::full : SpaceKind::subspace;
  // A pinned policy whose space is too large is refused up front; with the
  // auto policy an oversized subject is isolated like any other failure.
  if (enumerated && cfg.q_prime_policy > 0)
    enumerate_space(cfg.q_prime_policy, cfg.m, kind);

  fs::create_directories(root + "/fits/" + method);
  const auto runs = test_runs(man);
  std::vector<TimingRow> timing;
  std::exception_ptr last_failure;
  int failures = 0;

  for (const auto& [subject, session] : runs) {
    const auto t0 = Clock::now();
    try {
      const Matrix x = io::read_matrix_bin(root + "/" + test_rel(subject, session));
      const std::string rel = fit_rel(method, subject, session);
      fs::create_directories(root + "/" + rel);
      TimingRow row;
      row.subject = subject;
      row.session = session;
      if (cfg.method == Method::dual_regression) {
        const ScaledData sd = center_scale(x, cfg.scaling);
        const Matrix est = dual_regress(sd.data, tpl.mean).sources;
        io::write_matrix_bin(root + "/" + rel + "/sources.bin", est);
        man.add(root, rel + "/sources.bin");
      } else if (cfg.method == Method::fast) {
        FitResult fit = fit_fast(x, tpl, fit_opts(cfg, subject, session));
        row.nuisance = fit.seconds_nuisance;
        row.em = fit.seconds_em;
        row.reestimate = fit.seconds_reestimate;
        // Wall-clock fields would break byte-level idempotence of the fit
        // directory; timing.csv is their only home.
        fit.seconds_nuisance = fit.seconds_em = fit.seconds_reestimate = 0.0;
        save_fit(root + "/" + rel, fit);
        register_fit(man, root, rel, fit);
      } else {
        const ScaledData sd = center_scale(x, cfg.scaling);
        const auto t_red = Clock::now();
        int qp = cfg.q_prime_policy;
        if (qp < 0) {
          const ReducedData probe = prewhiten(sd.data, 0);
          qp = std::max(probe.order - tpl.l, 0);
        }
        const ReducedData red = prewhiten(sd.data, tpl.l + qp);
        row.nuisance = seconds_since(t_red);
        const FitOptions o = fit_opts(cfg, subject, session);
        FitResult fit = cfg.method == Method::exact
                            ? fit_exact(red, tpl, qp, o)
                            : fit_subspace(red, tpl, qp, o);
        row.em = fit.seconds_em;
        fit.seconds_nuisance = fit.seconds_em = fit.seconds_reestimate = 0.0;
        save_fit(root + "/" + rel, fit);
        register_fit(man, root, rel, fit);
      }
      row.total = seconds_since(t0);
      timing.push_back(row);
      log_info("fit: " + method + " subject " + zero_pad(subject) + " s" +
               std::to_string(session) + " done in " + fmt_real(row.total) +
               "s");
    } catch (const Error& e) {
      ++failures;
      last_failure = std::current_exception();
      log_error("fit: subject " + zero_pad(subject) + " s" +
                std::to_string(session) + " failed: " + e.what());
    }
  }

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : timing)
    rows.push_back({method, std::to_string(r.subject),
                    std::to_string(r.session), fmt_real(r.nuisance),
                    fmt_real(r.em), fmt_real(r.reestimate),
                    fmt_real(r.total)});
  write_csv(root + "/fits/" + method + "/timing.csv",
            {"method", "subject", "session", "seconds_nuisance", "seconds_em",
             "seconds_reestimate", "seconds_total"},
            rows);
  save_manifest(root, man);
  if (!runs.empty() && timing.empty() && last_failure)
    std::rethrow_exception(last_failure);
  log_info("fit: " + std::to_string(timing.size()) + " runs fitted, " +
           std::to_string(failures) + " failed");
}

namespace {

// Template-source estimate saved by any method: model engines store the
// posterior means, dual regression the regression maps.
Matrix load_estimate(const std::string& dir) {
  if (fs::exists(dir + "/meta.json"))
    return io::read_matrix_bin(dir + "/template_mean.bin");
  return io::read_matrix_bin(dir + "/sources.bin");
}

std::vector<std::string> fit_methods(const std::string& root) {
  std::vector<std::string> methods;
  const std::string base = root + "/fits";
  if (fs::is_directory(base))
    for (const auto& entry : fs::directory_iterator(base))
      if (entry.is_directory())
        methods.push_back(entry.path().filename().string());
  std::sort(methods.begin(), methods.end());
  return methods;
}

std::vector<std::pair<int, int>> fit_runs(const std::string& root,
                                          const std::string& method) {
  std::vector<std::pair<int, int>> runs;
  for (const auto& entry :
       fs::directory_iterator(root + "/fits/" + method)) {
    int i = 0, s = 0;
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() &&
        std::sscanf(name.c_str(), "subject_%d_s%d", &i, &s) == 2)
      runs.emplace_back(i, s);
  }
  std::sort(runs.begin(), runs.end());
  return runs;
}

}  // namespace

void cmd_evaluate(const RunConfig& cfg) {
  const std::string root = cfg.output_dir;
  const Manifest man = load_manifest(root);
  // Refuse tampered inputs: every registered artifact must still match.
  man.verify(root, "");

  const std::vector<std::string> methods = fit_methods(root);
  if (methods.empty())
    throw MissingArtifact("no fit artifacts under fits/; run fit first");
  const bool have_truth = man.has_prefix("truth/");
  const int q_prime_true = spec_for(cfg).n_nuisance();
  fs::create_directories(root + "/reports");
  Manifest man_out = man;

  std::vector<std::vector<std::string>> corr_rows, mse_rows, rel_rows,
      qp_rows;
  bool any_reliability = false;

  for (const std::string& method : methods) {
    const auto runs = fit_runs(root, method);
    std::vector<int> s1, s2;
    for (const auto& [i, s] : runs)
      (s == 1 ? s1 : s2).push_back(i);

    // Accuracy against stored truth, session 1.
    if (have_truth && !s1.empty()) {
      std::vector<Matrix> ests, truths;
      for (int i : s1) {
        const std::string tpath = root + "/" + truth_rel(i);
        if (!fs::exists(tpath)) continue;
        const Matrix est = load_estimate(root + "/" + fit_rel(method, i, 1));
        const Matrix truth_all = io::read_matrix_bin(tpath);
        const Matrix truth = truth_all.topRows(est.rows());
        for (int q = 0; q < est.rows(); ++q) {
          double r = std::numeric_limits<double>::quiet_NaN();
          try {
            r = corr_activated(est.row(q), truth.row(q),
                               activation_mask(truth.row(q)));
          } catch (const Error&) {
          }
          corr_rows.push_back({method, std::to_string(i), std::to_string(q),
                               fmt_real(r)});
        }
        ests.push_back(est);
        truths.push_back(truth);
      }
      if (ests.size() >= 2) {
        const Matrix mse = mse_map(ests, truths);
        io::write_matrix_bin(root + "/reports/mse_" + method + ".bin", mse);
        man_out.add(root, "reports/mse_" + method + ".bin");
        for (int q = 0; q < mse.rows(); ++q)
          mse_rows.push_back(
              {method, std::to_string(q), fmt_real(mse.row(q).mean())});
      } else {
        log_warn("evaluate: " + method +
                 ": fewer than 2 subjects with truth; MSE table skipped");
      }
    }

    // Reliability from paired sessions.
    std::vector<int> paired;
    for (int i : s1)
      if (std::find(s2.begin(), s2.end(), i) != s2.end()) paired.push_back(i);
    if (paired.size() >= 2) {
      any_reliability = true;
      std::vector<Matrix> first, second;
      for (int i : paired) {
        first.push_back(load_estimate(root + "/" + fit_rel(method, i, 1)));
        second.push_back(load_estimate(root + "/" + fit_rel(method, i, 2)));
      }
      const ReliabilityReport report = icc_map(first, second);
      io::write_matrix_bin(root + "/reports/icc_" + method + ".bin",
                           report.icc);
      man_out.add(root, "reports/icc_" + method + ".bin");
      const std::string weight_dir =
          fs::exists(root + "/" + cfg.template_dir + "/meta.json")
              ? cfg.template_dir
              : "template_true";
      const Template weights = load_template(root + "/" + weight_dir);
      const Vector w = wi2c2(report, weights.mean);
      for (int q = 0; q < w.size(); ++q)
        rel_rows.push_back({method, std::to_string(q), fmt_real(w(q))});
    }

    // Estimated nuisance counts, model methods only.
    for (const auto& [i, s] : runs) {
      const std::string meta =
          root + "/" + fit_rel(method, i, s) + "/meta.json";
      if (!fs::exists(meta)) continue;
      std::ifstream in(meta);
      json j;
      in >> j;
      qp_rows.push_back({method, std::to_string(i), std::to_string(s),
                         std::to_string(j.at("q_prime").get<int>()),
                         std::to_string(q_prime_true)});
    }
  }

  if (!have_truth && !any_reliability)
    throw MissingArtifact(
        "evaluate needs truth/ maps or two-session fits; found neither");

  if (have_truth) {
    write_csv(root + "/reports/accuracy_correlation.csv",
              {"method", "subject", "component", "correlation"}, corr_rows);
    man_out.add(root, "reports/accuracy_correlation.csv");
    write_csv(root + "/reports/accuracy_mse.csv",
              {"method", "component", "mean_mse"}, mse_rows);
    man_out.add(root, "reports/accuracy_mse.csv");
  }
  if (any_reliability) {
    write_csv(root + "/reports/reliability.csv",
              {"method", "component", "wi2c2"}, rel_rows);
    man_out.add(root, "reports/reliability.csv");
  }
  if (!qp_rows.empty()) {
    write_csv(root + "/reports/qprime.csv",
              {"method", "subject", "session", "q_prime", "q_prime_true"},
              qp_rows);
    man_out.add(root, "reports/qprime.csv");
  }
  save_manifest(root, man_out);
  log_info("evaluate: reports written for " +
           std::to_string(methods.size()) + " method(s)");
}

}  // namespace tica::cli
