#pragma once

#include <cstdint>
#include <vector>

#include "tica/common.hpp"
#include "tica/template_prior.hpp"

namespace tica {

// 2-D voxel lattice, row-major flattening: v = row * width + col.
struct Grid {
  int height = 46;
  int width = 55;
  long size() const { return static_cast<long>(height) * width; }
};

enum class Role { template_ic, nuisance_ic };

struct Center {
  double row = 0.0;
  double col = 0.0;
};

// Layout of smooth Gaussian-blob sources on a grid.
struct SourceSpec {
  Grid grid;
  std::vector<Center> centers;
  std::vector<double> amplitudes;
  std::vector<double> fwhm;
  std::vector<Role> roles;

  int n_sources() const { return static_cast<int>(centers.size()); }
  int n_template() const;
  int n_nuisance() const;
  void validate() const;
};

// Isotropic Gaussian bump: amplitude * exp(-d^2 / (2 sigma_k^2)) with
// sigma_k = fwhm / (2 sqrt(2 ln 2)); entries below 1e-3 * |amplitude| are
// truncated to exact zero for sparsity.
Vector gaussian_source(const Grid& grid, const Center& center,
                       double amplitude, double fwhm);

// All source maps of a spec, one row per source in spec order.
Matrix source_maps(const SourceSpec& spec);

// The three broad overlapping sources used by the sampled-deviation and
// feature-perturbation studies.
SourceSpec sima_spec();

// The same three sources plus a fourth, with roles 2 template + 2 nuisance,
// for the model-order study.
SourceSpec order_study_spec();

// Nine compact well-separated sources (6 template + 3 nuisance) on a 3x3
// lattice for the high-order study.
SourceSpec simc_spec();

// Population moments over ALL sources of a spec, in spec order:
// mean rows are the group maps, between-subject variance is
// var_scale * |mean| per voxel, noise variance zero.
Template population_prior(const SourceSpec& spec, double var_scale = 0.5);

// Same, restricted to the template-role sources (the prior handed to the
// model).
Template population_template(const SourceSpec& spec, double var_scale = 0.5);

// Subject maps drawn from a template prior: each entry is
// mean + N(0, var_between). Row-major draw order for a fixed seed.
Matrix sample_subject_a(const Template& tpl, std::uint64_t seed);

struct PerturbSd {
  double amplitude = 1.0;
  double fwhm = 5.0;
  double loc = 1.0;
};

// Subject maps obtained by perturbing each source's features with
// independent normal draws (locations rounded to integer voxels). Draws
// that leave the grid or produce a nonpositive width are retried up to 10
// times before PerturbationOutOfGrid.
Matrix sample_subject_b(const SourceSpec& base, const PerturbSd& sd,
                        std::uint64_t seed);
Matrix sample_subject_b(const SourceSpec& base, std::uint64_t seed);

// Monte Carlo population template of the feature-perturbation model:
// elementwise mean and sample variance over n_draws subject draws.
Template simb_template(const SourceSpec& base, long n_draws,
                       std::uint64_t seed);

// Independent AR(1) series (coefficient 0.3) with logistic innovations,
// standardized to mean 0 and unit sample SD per column.
Matrix gen_timecourses(long t, int q, std::uint64_t seed);

struct SubjectData {
  Matrix sources;      // Q_true x V ground truth
  Matrix timecourses;  // T x Q_true
  Matrix observed;     // T x V
  double snr = 0.0;
};

// observed = timecourses * sources + iid Gaussian noise whose SD is set so
// that sigma_sig / sigma_err = snr (capped at 1e6), where sigma_sig^2 is,
// per source, the mean squared intensity over the top 1% of |intensity|
// voxels, averaged over sources.
SubjectData gen_observed(const Matrix& sources, const Matrix& timecourses,
                         double snr, std::uint64_t seed);

// The signal-strength statistic used by gen_observed.
double signal_sd(const Matrix& sources);

}  // namespace tica
