#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "em_internal.hpp"
#include "tica/dual_regression.hpp"
#include "tica/em.hpp"
#include "tica/infomax.hpp"
#include "tica/matrix_io.hpp"
#include "tica/parallel.hpp"
#include "tica/rng.hpp"

namespace tica {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kSeedMog = 0x6d6f67;      // "mog"
constexpr std::uint64_t kSeedInfomax = 0x696361;  // "ica"

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// One E-step's sufficient statistics and per-location posteriors. All sums
// over locations run in ascending location order, so results do not depend
// on the thread count.
struct EStep {
  Matrix s_mean;           // K x V posterior means
  Matrix s_var;            // K x V marginal posterior variances
  Matrix suff_ys;          // Q x K, sum_v y E[s]'
  Matrix suff_ss;          // K x K, sum_v E[ss']
  Matrix z_marg_sum;       // Q' x M
  Matrix cond_first_sum;   // Q' x M, sum_v E[s_q|z_q=m,y] P(z_q=m|y)
  Matrix cond_second_sum;  // Q' x M
  double loglik = 0.0;
};

LatentSpace single_config_space(int m, SpaceKind kind) {
  LatentSpace space;
  space.q_prime = 0;
  space.m = m;
  space.kind = kind;
  space.configs = {std::vector<std::uint8_t>{}};
  return space;
}

// Reduces per-location storage into EStep sums, ascending location index.
EStep reduce_stores(const Matrix& y, Matrix&& mean_store, Matrix&& var_store,
                    const Matrix& tri_store, const Matrix& zm_store,
                    const Matrix& n1_store, const Matrix& n2_store,
                    const Vector& ll_store, Eigen::Index qp, int m) {
  const Eigen::Index v = y.cols();
  const Eigen::Index q = y.rows();
  const Eigen::Index k = mean_store.rows();
  EStep out;
  out.s_mean = std::move(mean_store);
  out.s_var = std::move(var_store);
  out.suff_ys = Matrix::Zero(q, k);
  Vector tri_sum = Vector::Zero(tri_store.rows());
  Vector zm_sum = Vector::Zero(zm_store.rows());
  Vector n1_sum = Vector::Zero(n1_store.rows());
  Vector n2_sum = Vector::Zero(n2_store.rows());
  double loglik = 0.0;
  for (Eigen::Index loc = 0; loc < v; ++loc) {
    out.suff_ys.noalias() += y.col(loc) * out.s_mean.col(loc).transpose();
    tri_sum += tri_store.col(loc);
    if (qp > 0) {
      zm_sum += zm_store.col(loc);
      n1_sum += n1_store.col(loc);
      n2_sum += n2_store.col(loc);
    }
    loglik += ll_store(loc);
  }
  out.loglik = loglik;
  out.suff_ss.resize(k, k);
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i; j < k; ++j) {
      out.suff_ss(i, j) = tri_sum(idx);
      out.suff_ss(j, i) = tri_sum(idx);
      ++idx;
    }
  if (qp > 0) {
    out.z_marg_sum = Eigen::Map<const Matrix>(zm_sum.data(), qp, m);
    out.cond_first_sum = Eigen::Map<const Matrix>(n1_sum.data(), qp, m);
    out.cond_second_sum = Eigen::Map<const Matrix>(n2_sum.data(), qp, m);
  }
  return out;
}

// E-step over an enumerated latent space (exact and subspace engines).
EStep generic_e_step(const Matrix& y, const Matrix& s0, const Matrix& var_fl,
                     const LatentSpace& space, const ThetaState& theta,
                     const Vector& c_diag, int threads) {
  const Eigen::Index v = y.cols();
  const Eigen::Index l = s0.rows();
  const Eigen::Index qp = theta.a2.cols();
  const Eigen::Index k = l + qp;
  const int m = space.m;
  const Eigen::Index tri = k * (k + 1) / 2;
  const Eigen::Index zsz = qp * m;

  const detail::EmTables tables = detail::make_tables(theta, c_diag, space);

  Matrix mean_store(k, v), var_store(k, v), tri_store(tri, v);
  Matrix zm_store(zsz, v), n1_store(zsz, v), n2_store(zsz, v);
  Vector ll_store(v);

  std::mutex fail_mutex;
  std::exception_ptr failure;
  parallel_for(v, threads, [&](long begin, long end) {
    try {
      for (long loc = begin; loc < end; ++loc) {
        const PosteriorMoments mom = detail::location_moments(
            y.col(loc), s0.col(loc), var_fl.col(loc), space, tables);
        mean_store.col(loc) = mom.first;
        Eigen::Index idx = 0;
        for (Eigen::Index i = 0; i < k; ++i) {
          var_store(i, loc) =
              mom.second(i, i) - mom.first(i) * mom.first(i);
          for (Eigen::Index j = i; j < k; ++j)
            tri_store(idx++, loc) = mom.second(i, j);
        }
        if (zsz > 0) {
          const Matrix num1 = mom.cond_first.cwiseProduct(mom.z_marg);
          const Matrix num2 = mom.cond_second.cwiseProduct(mom.z_marg);
          zm_store.col(loc) =
              Eigen::Map<const Vector>(mom.z_marg.data(), zsz);
          n1_store.col(loc) = Eigen::Map<const Vector>(num1.data(), zsz);
          n2_store.col(loc) = Eigen::Map<const Vector>(num2.data(), zsz);
        }
        ll_store(loc) = mom.log_evidence;
      }
    } catch (...) {
      const std::lock_guard<std::mutex> lock(fail_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  return reduce_stores(y, std::move(mean_store), std::move(var_store),
                       tri_store, zm_store, n1_store, n2_store, ll_store, qp,
                       m);
}

// Template-only E-step with closed-form Gaussian posteriors (fast engine).
// The marginal likelihood uses the rank-L update identities
//   |Sigma_y| = |nu0_sq C| |Sigma_v| |P_v|,
//   r' Sigma_y^-1 r = r'(nu0_sq C)^-1 r - (A'(nu0_sq C)^-1 r)' P_v^-1 (...),
// with P_v the posterior precision, so nothing larger than L x L is
// factored per location.
EStep fast_e_step(const Matrix& y, const Matrix& s0, const Matrix& var_fl,
                  const ThetaState& theta, const Vector& c_diag,
                  int threads) {
  const Eigen::Index v = y.cols();
  const Eigen::Index l = s0.rows();
  const Eigen::Index q = y.rows();
  const Eigen::Index tri = l * (l + 1) / 2;

  const Vector c_inv = c_diag.cwiseInverse();
  const Matrix g =
      (1.0 / theta.nu0_sq) * theta.a1.transpose() * c_inv.asDiagonal();
  const Matrix p1 = g * theta.a1;  // (1/nu0_sq) A1'C^-1 A1
  const Matrix gy = g * y;
  const Matrix r0 = y - theta.a1 * s0;  // residual at the prior mean
  const double log_det_noise =
      static_cast<double>(q) * std::log(theta.nu0_sq) +
      c_diag.array().log().sum();
  constexpr double kLogTwoPi = 1.8378770664093453;

  Matrix mean_store(l, v), var_store(l, v), tri_store(tri, v);
  Vector ll_store(v);

  std::mutex fail_mutex;
  std::exception_ptr failure;
  parallel_for(v, threads, [&](long begin, long end) {
    try {
      Matrix prec(l, l), cov(l, l);
      for (long loc = begin; loc < end; ++loc) {
        const Vector var_inv = var_fl.col(loc).cwiseInverse();
        prec = p1;
        prec.diagonal() += var_inv;
        Eigen::LLT<Matrix> llt(prec);
        if (llt.info() != Eigen::Success) {
          prec.diagonal().array() += 1e-10 * prec.diagonal().mean();
          llt.compute(prec);
          if (llt.info() != Eigen::Success)
            throw NumericalError("posterior precision not SPD");
        }
        cov = llt.solve(Matrix::Identity(l, l));
        const Vector rhs =
            gy.col(loc) + var_inv.cwiseProduct(s0.col(loc));
        const Vector mean = cov * rhs;
        mean_store.col(loc) = mean;
        Eigen::Index idx = 0;
        for (Eigen::Index i = 0; i < l; ++i) {
          var_store(i, loc) = cov(i, i);
          for (Eigen::Index j = i; j < l; ++j)
            tri_store(idx++, loc) = cov(i, j) + mean(i) * mean(j);
        }
        // Observed-data contribution log g(y; A1 s0, A1 Sigma_v A1' + N).
        const double log_det_prec =
            2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        const Vector gr = gy.col(loc) - p1 * s0.col(loc);
        const double r_n_r = (1.0 / theta.nu0_sq) *
                             (r0.col(loc).array().square() * c_inv.array())
                                 .sum();
        const double quad = r_n_r - gr.dot(cov * gr);
        const double log_det_sv = var_fl.col(loc).array().log().sum();
        ll_store(loc) =
            -0.5 * (static_cast<double>(q) * kLogTwoPi + log_det_noise +
                    log_det_sv + log_det_prec + quad);
      }
    } catch (...) {
      const std::lock_guard<std::mutex> lock(fail_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  const Matrix empty(0, v);
  return reduce_stores(y, std::move(mean_store), std::move(var_store),
                       tri_store, empty, empty, empty, ll_store, 0, 0);
}

// Dual-regression initialization shared by all engines: orthonormalized
// mixing from regressing the template means, residual-based noise level,
// and, when the model carries nuisance components, an orthonormal
// completion with MoG priors fit to the projected residual.
ThetaState init_theta(const Matrix& y, const Vector& c_diag,
                      const Template& tpl, int q_prime, int m,
                      std::uint64_t seed) {
  const Eigen::Index q = y.rows();
  const DualRegResult dr = dual_regress(y, tpl.mean);
  ThetaState theta;
  theta.a1 = detail::orthonormalize(dr.mixing);
  const Matrix s1hat = theta.a1.transpose() * y;
  const Matrix resid = y - theta.a1 * s1hat;
  const double rvar = resid.squaredNorm() /
                      (static_cast<double>(y.cols()) * c_diag.sum());
  // A square orthonormal A1 interpolates y exactly, so the projection
  // residual carries no noise information; seeding near zero would pin the
  // first posterior to the GLS solution and freeze EM there. Fall back to a
  // fraction of the data power so the first posterior stays diffuse.
  const double power = y.squaredNorm() /
                       (static_cast<double>(y.cols()) * c_diag.sum());
  theta.nu0_sq = rvar > 1e-6 * power ? rvar : std::max(0.1 * power, 1e-10);
  if (q_prime > 0) {
    Eigen::HouseholderQR<Matrix> qr(theta.a1);
    const Matrix qfull = qr.householderQ() * Matrix::Identity(q, q);
    theta.a2 = qfull.rightCols(q_prime);
    const Matrix s2hat = theta.a2.transpose() * resid;
    theta.mog.reserve(static_cast<std::size_t>(q_prime));
    for (int j = 0; j < q_prime; ++j)
      theta.mog.push_back(
          fit_mog(s2hat.row(j).transpose(), m,
                  derive_seed(seed, kSeedMog, static_cast<std::uint64_t>(j))));
  }
  return theta;
}

// Alternates E and M steps until the posterior template map and the noise
// level both stabilize. The E step runs first each round, so the returned
// maps always correspond to the returned parameters.
void run_em_loop(const Matrix& y, const Vector& c_diag, int noise_dim,
                 Eigen::Index l, const FitOptions& opts,
                 const std::function<EStep(const ThetaState&)>& e_step,
                 ThetaState& theta, FitResult& fit) {
  const Eigen::Index v = y.cols();
  const Vector c_inv = c_diag.cwiseInverse();
  const double suff_yy = y.cwiseProduct(c_inv.asDiagonal() * y).sum();
  double nu_rel = std::numeric_limits<double>::infinity();
  Matrix prev_map;
  int iters = 0;
  while (true) {
    const EStep e = e_step(theta);
    fit.loglik_trace.push_back(e.loglik);
    fit.template_mean = e.s_mean.topRows(l);
    fit.template_var = e.s_var.topRows(l);
    const Eigen::Index qp = e.s_mean.rows() - l;
    if (qp > 0) fit.nuisance_mean = e.s_mean.bottomRows(qp);
    if (iters > 0) {
      const double map_change =
          (fit.template_mean - prev_map).cwiseAbs().maxCoeff();
      if (map_change < opts.tol_map && nu_rel < opts.tol_nu) {
        fit.converged = true;
        break;
      }
    }
    if (iters >= opts.max_iters) break;
    prev_map = fit.template_mean;
    const Matrix a_new = update_mixing(e.suff_ys, e.suff_ss,
                                       opts.orthogonalize);
    const double nu_new = update_noise_var(suff_yy, e.suff_ys, e.suff_ss,
                                           a_new, c_diag, v, noise_dim);
    nu_rel = std::abs(nu_new - theta.nu0_sq) / theta.nu0_sq;
    theta.a1 = a_new.leftCols(l);
    if (qp > 0) {
      theta.a2 = a_new.rightCols(qp);
      theta.mog = update_mog(e.z_marg_sum, e.cond_first_sum,
                             e.cond_second_sum, v, theta.mog);
    }
    theta.nu0_sq = nu_new;
    ++iters;
  }
  fit.n_iters = iters;
  if (!fit.converged)
    log_warn("EM stopped at max_iters without reaching tolerance");
}

FitResult fit_reduced(const ReducedData& red, const Template& tpl,
                      int q_prime, SpaceKind kind, const FitOptions& opts) {
  if (q_prime < 0) throw ConfigError("nuisance count must be >= 0");
  if (red.y.rows() != tpl.l + q_prime)
    throw DimensionMismatch("fit: reduced order must equal L + Q'");
  if (red.y.cols() != tpl.v)
    throw DimensionMismatch("fit: data and template disagree on V");
  const auto t0 = Clock::now();
  const Matrix& y = red.y;
  const LatentSpace space =
      q_prime == 0 ? single_config_space(opts.m, kind)
                   : enumerate_space(q_prime, opts.m, kind, opts.space_cap);
  const Matrix var_fl = tpl.var_between_floored();

  ThetaState theta =
      init_theta(y, red.c_diag, tpl, q_prime, opts.m, opts.seed);

  FitResult fit;
  fit.order = static_cast<int>(y.rows());
  fit.l = tpl.l;
  fit.q_prime = q_prime;
  fit.n_configs = space.configs.size();
  fit.low_rank_warning = red.low_rank_warning;
  run_em_loop(
      y, red.c_diag, static_cast<int>(y.rows()), tpl.l, opts,
      [&](const ThetaState& th) {
        return generic_e_step(y, tpl.mean, var_fl, space, th, red.c_diag,
                              opts.threads);
      },
      theta, fit);
  fit.theta = std::move(theta);
  fit.seconds_em = seconds_since(t0);
  return fit;
}

// Residual nuisance dimensionality; degenerate spectra mean none.
int residual_order(const Matrix& resid) {
  try {
    const EigenSpectrum spec = eigen_spectrum(resid);
    return estimate_order(spec.eigenvalues, resid.cols()).order;
  } catch (const DegenerateInput&) {
    return 0;
  }
}

}  // namespace

FitResult fit_exact(const ReducedData& y, const Template& tpl, int q_prime,
                    const FitOptions& opts) {
  return fit_reduced(y, tpl, q_prime, SpaceKind::full, opts);
}

FitResult fit_subspace(const ReducedData& y, const Template& tpl, int q_prime,
                       const FitOptions& opts) {
  return fit_reduced(y, tpl, q_prime, SpaceKind::subspace, opts);
}

FitResult fit_fast(const Matrix& x_raw, const Template& tpl,
                   const FitOptions& opts) {
  const auto t0 = Clock::now();
  const ScaledData scaled = center_scale(x_raw, opts.scaling);
  const bool qp_fixed = opts.q_prime >= 0;

  FitResult fit;
  ReducedData red;
  if (qp_fixed) {
    red = prewhiten(scaled.data, tpl.l + opts.q_prime);
  } else {
    red = prewhiten(scaled.data);
    if (red.order < tpl.l) {
      fit.low_order = true;
      log_warn("estimated order below the template size; refitting with no "
               "nuisance components");
      const bool keep_warning = red.low_rank_warning;
      red = prewhiten(scaled.data, tpl.l);
      red.low_rank_warning = red.low_rank_warning || keep_warning;
    }
  }
  if (red.y.cols() != tpl.v)
    throw DimensionMismatch("fit: data and template disagree on V");
  fit.low_rank_warning = red.low_rank_warning;
  const Matrix& y = red.y;

  // Nuisance stage: residualize initial dual-regression template estimates,
  // choose the residual order, and extract nuisance sources with Infomax.
  // When the reduced space has no room beyond the template components the
  // residual is a rank-zero projection remainder, so there is nothing to
  // extract.
  int q_prime = qp_fixed ? opts.q_prime : 0;
  Matrix y2 = y;
  Matrix nuis_sources;
  if (!fit.low_order && y.rows() > tpl.l) {
    const DualRegResult dr0 = dual_regress(y, tpl.mean);
    const Matrix resid = y - dr0.mixing * dr0.sources;
    if (!qp_fixed) q_prime = residual_order(resid);
    if (q_prime > 0) {
      const IcaResult ica =
          infomax_restarts(resid, q_prime, opts.n_restarts,
                           derive_seed(opts.seed, kSeedInfomax, 0));
      nuis_sources = ica.sources;
      y2 = y - ica.mixing * ica.sources;
    }
  }
  fit.seconds_nuisance = seconds_since(t0);

  // Template-only EM on the nuisance-free data.
  const auto t1 = Clock::now();
  const Matrix var_fl = tpl.var_between_floored();
  ThetaState theta = init_theta(y2, red.c_diag, tpl, 0, opts.m, opts.seed);
  fit.order = red.order;
  fit.l = tpl.l;
  fit.n_configs = 1;
  run_em_loop(
      y2, red.c_diag, tpl.l, tpl.l, opts,
      [&](const ThetaState& th) {
        return fast_e_step(y2, tpl.mean, var_fl, th, red.c_diag,
                           opts.threads);
      },
      theta, fit);
  fit.seconds_em = seconds_since(t1);

  // Optional nuisance re-estimation from the converged template estimates.
  if (opts.reestimate_nuisance && !fit.low_order) {
    const auto t2 = Clock::now();
    const Matrix resid2 = y - theta.a1 * fit.template_mean;
    const int qp2 = qp_fixed ? q_prime : residual_order(resid2);
    if (qp2 > 0) {
      const IcaResult ica2 =
          infomax_restarts(resid2, qp2, opts.n_restarts,
                           derive_seed(opts.seed, kSeedInfomax, 1));
      nuis_sources = ica2.sources;
    } else {
      nuis_sources = Matrix();
    }
    q_prime = qp2;
    fit.seconds_reestimate = seconds_since(t2);
  }

  fit.q_prime = q_prime;
  fit.nuisance_mean = std::move(nuis_sources);
  fit.theta = std::move(theta);
  return fit;
}

void save_fit(const std::string& dir, const FitResult& fit) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["order"] = fit.order;
  meta["l"] = fit.l;
  meta["q_prime"] = fit.q_prime;
  meta["n_iters"] = fit.n_iters;
  meta["converged"] = fit.converged;
  meta["loglik_trace"] = fit.loglik_trace;
  meta["n_configs"] = fit.n_configs;
  meta["low_order"] = fit.low_order;
  meta["low_rank_warning"] = fit.low_rank_warning;
  meta["seconds_nuisance"] = fit.seconds_nuisance;
  meta["seconds_em"] = fit.seconds_em;
  meta["seconds_reestimate"] = fit.seconds_reestimate;
  std::ofstream out(dir + "/meta.json");
  if (!out) throw IoError("cannot write " + dir + "/meta.json");
  out << meta.dump(2) << "\n";
  if (!out) throw IoError("short write: " + dir + "/meta.json");
  io::write_matrix(dir + "/template_mean.bin", fit.template_mean);
  io::write_matrix(dir + "/template_var.bin", fit.template_var);
  if (fit.nuisance_mean.size() > 0)
    io::write_matrix(dir + "/nuisance_mean.bin", fit.nuisance_mean);
}

FitResult load_fit(const std::string& dir) {
  std::ifstream in(dir + "/meta.json");
  if (!in) throw MissingArtifact("missing fit meta: " + dir + "/meta.json");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad fit meta: " + std::string(e.what()));
  }
  FitResult fit;
  try {
    fit.order = meta.at("order").get<int>();
    fit.l = meta.at("l").get<int>();
    fit.q_prime = meta.at("q_prime").get<int>();
    fit.n_iters = meta.at("n_iters").get<int>();
    fit.converged = meta.at("converged").get<bool>();
    fit.loglik_trace = meta.at("loglik_trace").get<std::vector<double>>();
    fit.n_configs = meta.at("n_configs").get<std::size_t>();
    fit.low_order = meta.at("low_order").get<bool>();
    fit.low_rank_warning = meta.at("low_rank_warning").get<bool>();
    fit.seconds_nuisance = meta.at("seconds_nuisance").get<double>();
    fit.seconds_em = meta.at("seconds_em").get<double>();
    fit.seconds_reestimate = meta.at("seconds_reestimate").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad fit meta fields: " + std::string(e.what()));
  }
  fit.template_mean = io::read_matrix(dir + "/template_mean.bin");
  fit.template_var = io::read_matrix(dir + "/template_var.bin");
  if (std::filesystem::exists(dir + "/nuisance_mean.bin"))
    fit.nuisance_mean = io::read_matrix(dir + "/nuisance_mean.bin");
  if (fit.template_mean.rows() != fit.l ||
      fit.template_var.rows() != fit.l ||
      fit.template_mean.cols() != fit.template_var.cols())
    throw FormatError("fit maps disagree with meta dimensions: " + dir);
  return fit;
}

}  // namespace tica
