#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tica/common.hpp"
#include "tica/dim_reduction.hpp"
#include "tica/mog.hpp"
#include "tica/preprocess.hpp"
#include "tica/template_prior.hpp"

namespace tica {

// Model parameters for the reduced-space source model
//   y(v) = a1 s1(v) + a2 s2(v) + e(v),  e ~ N(0, nu0_sq C),
// where s1 carries the template components (Gaussian prior per location)
// and s2 the nuisance components (mixture-of-Gaussians prior, one MoG per
// component). a2 and mog are empty when the model has no nuisance part.
struct ThetaState {
  Matrix a1;     // Q x L
  Matrix a2;     // Q x Q'
  double nu0_sq = 0.0;
  std::vector<MoGParams> mog;  // length Q'
};

enum class SpaceKind { full, subspace };

// Enumerated latent mixture assignments. Component labels are 0-based;
// label m-1 is the activation state (largest-variance MoG component).
struct LatentSpace {
  int q_prime = 0;
  int m = 0;
  SpaceKind kind = SpaceKind::full;
  std::vector<std::vector<std::uint8_t>> configs;  // lexicographic order
};

// Builds the full space (m^q_prime configs) or the restricted subspace with
// at most one component active: (q_prime + m - 1) (m-1)^(q_prime-1)
// configs. Throws SpaceTooLarge when the count would exceed cap.
LatentSpace enumerate_space(int q_prime, int m, SpaceKind kind,
                            std::size_t cap = 10'000'000);

struct CondPosterior {
  Vector mean;  // length L + Q'
  Matrix cov;
};

// Conditional Gaussian posterior of the stacked sources at one location
// given a mixture assignment z:
//   cov  = [(1/nu0) A' C^-1 A + blockdiag(var_v^-1, d_z^-1)]^-1
//   mean = cov [(1/nu0) A' C^-1 y + (var_v^-1 s0_v ; d_z^-1 mu_z)].
// s0_v and var_v are the template prior slice at the location; var_v must
// already be floored.
CondPosterior cond_posterior_s(const Vector& y_v,
                               const std::vector<std::uint8_t>& z,
                               const ThetaState& theta, const Vector& s0_v,
                               const Vector& var_v, const Vector& c_diag);

// Posterior over the latent space at one location, computed in the log
// domain and normalized with log-sum-exp. log_evidence is the normalizer:
// this location's contribution to the observed-data log likelihood.
struct ZPosterior {
  Vector probs;  // aligned with space.configs
  double log_evidence = 0.0;
};

ZPosterior posterior_z(const Vector& y_v, const ThetaState& theta,
                       const Vector& s0_v, const Vector& var_v,
                       const Vector& c_diag, const LatentSpace& space);

// Mixture-weighted posterior moments at one location, plus the per
// (component, label) marginals and conditional moments the MoG update
// consumes.
struct PosteriorMoments {
  Vector first;        // E[s | y], length L + Q'
  Matrix second;       // E[s s' | y]
  Matrix z_marg;       // Q' x M, Pr(z_q = m | y)
  Matrix cond_first;   // Q' x M, E[s_q | z_q = m, y] (0 where marginal is 0)
  Matrix cond_second;  // Q' x M, E[s_q^2 | z_q = m, y]
  double log_evidence = 0.0;
};

PosteriorMoments posterior_moments(const Vector& y_v, const ThetaState& theta,
                                   const Vector& s0_v, const Vector& var_v,
                                   const Vector& c_diag,
                                   const LatentSpace& space);

// M-step mixing update from accumulated sufficient statistics
// suff_ys = sum_v y E[s]' and suff_ss = sum_v E[ss']; optionally projected
// to the nearest orthonormal-column matrix (SVD U V').
Matrix update_mixing(const Matrix& suff_ys, const Matrix& suff_ss,
                     bool orthogonalize);

// M-step residual variance:
//   (1/(V dim)) sum_v { y'C^-1 y - 2 y'C^-1 A E[s] + tr(A'C^-1 A E[ss']) }
// evaluated with the updated mixing matrix and floored at 1e-10. dim is the
// data dimension Q, or L in the fast engine's template-only model.
double update_noise_var(double suff_yy, const Matrix& suff_ys,
                        const Matrix& suff_ss, const Matrix& a_new,
                        const Vector& c_diag, long v, int dim);

// M-step MoG update from accumulated marginals and conditional-moment sums
// (numerators, i.e. already weighted by the marginals). Components whose
// accumulated mass is ~0 keep their previous location and scale.
std::vector<MoGParams> update_mog(const Matrix& z_marg_sum,
                                  const Matrix& cond_first_sum,
                                  const Matrix& cond_second_sum, long v,
                                  const std::vector<MoGParams>& previous);

// Observed-data log likelihood of reduced data under theta: the sum over
// locations of the posterior_z normalizer.
double observed_loglik(const Matrix& y, const ThetaState& theta,
                       const Matrix& tpl_mean, const Matrix& tpl_var_floored,
                       const Vector& c_diag, const LatentSpace& space,
                       int threads = 0);

struct FitOptions {
  int max_iters = 100;
  double tol_map = 1e-3;   // max abs change in posterior template means
  double tol_nu = 1e-5;    // relative change in nu0_sq
  bool orthogonalize = true;
  int m = 3;               // MoG components per nuisance source
  int n_restarts = 5;      // infomax restarts (fast engine)
  bool reestimate_nuisance = false;
  int q_prime = -1;        // fast engine: -1 selects automatically
  Scaling scaling = Scaling::temporal_sd;  // fast engine preprocessing
  std::uint64_t seed = 0;
  int threads = 0;         // <= 0: hardware concurrency
  std::size_t space_cap = 10'000'000;
};

struct FitResult {
  Matrix template_mean;  // L x V posterior means
  Matrix template_var;   // L x V posterior variances
  Matrix nuisance_mean;  // Q' x V (empty when Q' = 0)
  ThetaState theta;
  int order = 0;        // Q
  int l = 0;            // L
  int q_prime = 0;      // Q'
  int n_iters = 0;
  bool converged = false;
  std::vector<double> loglik_trace;
  std::size_t n_configs = 0;
  bool low_order = false;
  bool low_rank_warning = false;
  double seconds_nuisance = 0.0;
  double seconds_em = 0.0;
  double seconds_reestimate = 0.0;
};

// EM over the full latent space. Requires y.order == tpl.l + q_prime.
FitResult fit_exact(const ReducedData& y, const Template& tpl, int q_prime,
                    const FitOptions& opts = {});

// Same engine over the at-most-one-active subspace.
FitResult fit_subspace(const ReducedData& y, const Template& tpl, int q_prime,
                       const FitOptions& opts = {});

// Full pipeline on raw data: preprocess, reduce (auto order unless
// opts.q_prime pins the nuisance count), estimate nuisance sources with
// Infomax, subtract them, and run the template-only EM with closed-form
// Gaussian posteriors.
FitResult fit_fast(const Matrix& x_raw, const Template& tpl,
                   const FitOptions& opts = {});

// Directory layout: meta.json plus template_mean.bin, template_var.bin and,
// when Q' > 0, nuisance_mean.bin.
void save_fit(const std::string& dir, const FitResult& fit);
FitResult load_fit(const std::string& dir);

}  // namespace tica
