#include "tica/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <vector>

#include "tica/rng.hpp"

namespace tica {

namespace {

constexpr std::uint64_t kSeedDrawB = 0x73696d62;
constexpr std::uint64_t kSeedTimecourse = 0x7463;

}  // namespace

int SourceSpec::n_template() const {
  return static_cast<int>(std::count(roles.begin(), roles.end(),
                                     Role::template_ic));
}

int SourceSpec::n_nuisance() const {
  return n_sources() - n_template();
}

void SourceSpec::validate() const {
  const std::size_t n = centers.size();
  if (n == 0) throw DegenerateInput("source spec has no sources");
  if (amplitudes.size() != n || fwhm.size() != n || roles.size() != n) {
    throw DimensionMismatch("source spec feature lists disagree in length");
  }
  if (grid.height < 1 || grid.width < 1) {
    throw DegenerateInput("source grid is empty");
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!(fwhm[j] > 0.0)) throw DegenerateInput("source fwhm must be positive");
    if (centers[j].row < 0.0 || centers[j].row > grid.height - 1 ||
        centers[j].col < 0.0 || centers[j].col > grid.width - 1) {
      throw DegenerateInput("source center outside the grid");
    }
  }
}

Vector gaussian_source(const Grid& grid, const Center& center,
                       double amplitude, double fwhm) {
  if (!(fwhm > 0.0)) throw DegenerateInput("fwhm must be positive");
  const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  const double cutoff = 1e-3 * std::abs(amplitude);
  Vector map(grid.size());
  long v = 0;
  for (int r = 0; r < grid.height; ++r) {
    const double dr = r - center.row;
    for (int c = 0; c < grid.width; ++c, ++v) {
      const double dc = c - center.col;
      const double value =
          amplitude * std::exp(-(dr * dr + dc * dc) * inv_two_var);
      map(v) = std::abs(value) < cutoff ? 0.0 : value;
    }
  }
  return map;
}

Matrix source_maps(const SourceSpec& spec) {
  spec.validate();
  Matrix maps(spec.n_sources(), spec.grid.size());
  for (int j = 0; j < spec.n_sources(); ++j) {
    maps.row(j) = gaussian_source(spec.grid, spec.centers[j],
                                  spec.amplitudes[j], spec.fwhm[j])
                      .transpose();
  }
  return maps;
}

SourceSpec sima_spec() {
  SourceSpec spec;
  spec.centers = {{12.0, 15.0}, {35.0, 40.0}, {15.0, 40.0}};
  spec.amplitudes = {5.0, 5.0, 5.0};
  spec.fwhm = {30.0, 40.0, 45.0};
  spec.roles = {Role::template_ic, Role::template_ic, Role::template_ic};
  return spec;
}

SourceSpec order_study_spec() {
  SourceSpec spec = sima_spec();
  spec.roles = {Role::template_ic, Role::template_ic, Role::nuisance_ic};
  spec.centers.push_back({35.0, 12.0});
  spec.amplitudes.push_back(5.0);
  spec.fwhm.push_back(35.0);
  spec.roles.push_back(Role::nuisance_ic);
  return spec;
}

SourceSpec simc_spec() {
  SourceSpec spec;
  const double rows[3] = {8.0, 23.0, 38.0};
  const double cols[3] = {9.0, 27.0, 45.0};
  // Template sources fill the first two lattice rows, nuisance the third.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      spec.centers.push_back({rows[i], cols[j]});
      spec.amplitudes.push_back(5.0);
      spec.fwhm.push_back(12.0);
      spec.roles.push_back(i < 2 ? Role::template_ic : Role::nuisance_ic);
    }
  }
  return spec;
}

Template population_prior(const SourceSpec& spec, double var_scale) {
  if (!(var_scale >= 0.0)) {
    throw DegenerateInput("variance scale must be nonnegative");
  }
  Template tpl;
  tpl.mean = source_maps(spec);
  tpl.l = static_cast<int>(tpl.mean.rows());
  tpl.v = tpl.mean.cols();
  tpl.n_subjects = 0;
  tpl.var_between = var_scale * tpl.mean.cwiseAbs();
  tpl.var_total = tpl.var_between;
  tpl.var_noise = Matrix::Zero(tpl.l, tpl.v);
  return tpl;
}

Template population_template(const SourceSpec& spec, double var_scale) {
  const Template full = population_prior(spec, var_scale);
  const int l = spec.n_template();
  if (l == 0) throw DegenerateInput("spec has no template sources");
  Template tpl;
  tpl.l = l;
  tpl.v = full.v;
  tpl.n_subjects = 0;
  tpl.mean.resize(l, full.v);
  tpl.var_between.resize(l, full.v);
  tpl.var_total.resize(l, full.v);
  tpl.var_noise.resize(l, full.v);
  int row = 0;
  for (int j = 0; j < spec.n_sources(); ++j) {
    if (spec.roles[static_cast<std::size_t>(j)] != Role::template_ic) continue;
    tpl.mean.row(row) = full.mean.row(j);
    tpl.var_between.row(row) = full.var_between.row(j);
    tpl.var_total.row(row) = full.var_total.row(j);
    tpl.var_noise.row(row) = full.var_noise.row(j);
    ++row;
  }
  return tpl;
}

Matrix sample_subject_a(const Template& tpl, std::uint64_t seed) {
  if (tpl.l < 1 || tpl.v < 1) throw DegenerateInput("empty template");
  Rng rng(seed);
  Matrix maps(tpl.l, tpl.v);
  for (int q = 0; q < tpl.l; ++q) {
    for (long v = 0; v < tpl.v; ++v) {
      const double sd = std::sqrt(std::max(tpl.var_between(q, v), 0.0));
      maps(q, v) = tpl.mean(q, v) + sd * rng.normal();
    }
  }
  return maps;
}

Matrix sample_subject_b(const SourceSpec& base, const PerturbSd& sd,
                        std::uint64_t seed) {
  base.validate();
  Rng rng(seed);
  SourceSpec subject = base;
  for (int j = 0; j < base.n_sources(); ++j) {
    const std::size_t sj = static_cast<std::size_t>(j);
    subject.amplitudes[sj] = base.amplitudes[sj] + sd.amplitude * rng.normal();

    double width = base.fwhm[sj] + sd.fwhm * rng.normal();
    for (int attempt = 0; !(width > 0.0); ++attempt) {
      if (attempt >= 10) {
        throw PerturbationOutOfGrid("perturbed width stayed nonpositive");
      }
      width = base.fwhm[sj] + sd.fwhm * rng.normal();
    }
    subject.fwhm[sj] = width;

    Center c{base.centers[sj].row + std::round(sd.loc * rng.normal()),
             base.centers[sj].col + std::round(sd.loc * rng.normal())};
    for (int attempt = 0;
         c.row < 0.0 || c.row > base.grid.height - 1 || c.col < 0.0 ||
         c.col > base.grid.width - 1;
         ++attempt) {
      if (attempt >= 10) {
        throw PerturbationOutOfGrid("perturbed center left the grid");
      }
      c = {base.centers[sj].row + std::round(sd.loc * rng.normal()),
           base.centers[sj].col + std::round(sd.loc * rng.normal())};
    }
    subject.centers[sj] = c;
  }
  return source_maps(subject);
}

Matrix sample_subject_b(const SourceSpec& base, std::uint64_t seed) {
  return sample_subject_b(base, PerturbSd{}, seed);
}

Template simb_template(const SourceSpec& base, long n_draws,
                       std::uint64_t seed) {
  if (n_draws < 2) throw DegenerateInput("need at least two draws");
  base.validate();
  const long v = base.grid.size();
  const int l = base.n_sources();
  Matrix sum = Matrix::Zero(l, v);
  Matrix sum_sq = Matrix::Zero(l, v);
  for (long i = 0; i < n_draws; ++i) {
    const Matrix draw = sample_subject_b(
        base, derive_seed(seed, kSeedDrawB, static_cast<std::uint64_t>(i)));
    sum += draw;
    sum_sq += draw.cwiseProduct(draw);
  }
  const double n = static_cast<double>(n_draws);
  Template tpl;
  tpl.l = l;
  tpl.v = v;
  tpl.n_subjects = static_cast<int>(std::min<long>(
      n_draws, std::numeric_limits<int>::max()));
  tpl.mean = sum / n;
  tpl.var_between =
      ((sum_sq - n * tpl.mean.cwiseProduct(tpl.mean)) / (n - 1.0))
          .cwiseMax(0.0);
  tpl.var_total = tpl.var_between;
  tpl.var_noise = Matrix::Zero(l, v);
  return tpl;
}

Matrix gen_timecourses(long t, int q, std::uint64_t seed) {
  if (t < 2 || q < 1) throw DegenerateInput("need t >= 2 and q >= 1");
  constexpr double kPhi = 0.3;
  constexpr long kBurnIn = 50;
  Matrix tc(t, q);
  for (int j = 0; j < q; ++j) {
    Rng rng(derive_seed(seed, kSeedTimecourse,
                        static_cast<std::uint64_t>(j)));
    double x = 0.0;
    for (long i = 0; i < kBurnIn; ++i) x = kPhi * x + rng.logistic();
    for (long i = 0; i < t; ++i) {
      x = kPhi * x + rng.logistic();
      tc(i, j) = x;
    }
    const double mean = tc.col(j).mean();
    tc.col(j).array() -= mean;
    const double sd =
        std::sqrt(tc.col(j).squaredNorm() / static_cast<double>(t - 1));
    if (!(sd > 0.0)) throw NumericalError("degenerate time course");
    tc.col(j) /= sd;
  }
  return tc;
}

double signal_sd(const Matrix& sources) {
  const int q = static_cast<int>(sources.rows());
  const long v = sources.cols();
  if (q < 1 || v < 1) throw DegenerateInput("empty source matrix");
  const long k = std::max<long>(
      1, static_cast<long>(std::ceil(0.01 * static_cast<double>(v))));
  double var_sum = 0.0;
  std::vector<long> idx(static_cast<std::size_t>(v));
  for (int j = 0; j < q; ++j) {
    std::iota(idx.begin(), idx.end(), 0L);
    // Deterministic top-k: |intensity| descending, index ascending on ties.
    std::sort(idx.begin(), idx.end(), [&](long a, long b) {
      const double fa = std::abs(sources(j, a));
      const double fb = std::abs(sources(j, b));
      if (fa != fb) return fa > fb;
      return a < b;
    });
    double mean_sq = 0.0;
    for (long i = 0; i < k; ++i) {
      const double s = sources(j, idx[static_cast<std::size_t>(i)]);
      mean_sq += s * s;
    }
    var_sum += mean_sq / static_cast<double>(k);
  }
  return std::sqrt(var_sum / static_cast<double>(q));
}

SubjectData gen_observed(const Matrix& sources, const Matrix& timecourses,
                         double snr, std::uint64_t seed) {
  if (sources.rows() != timecourses.cols()) {
    throw DimensionMismatch("source count disagrees with time course count");
  }
  if (!(snr > 0.0)) throw DegenerateInput("snr must be positive");
  const double sig = signal_sd(sources);
  if (!(sig > 0.0)) throw DegenerateInput("all sources are zero");
  const double err_sd = sig / std::min(snr, 1e6);

  SubjectData out;
  out.sources = sources;
  out.timecourses = timecourses;
  out.snr = snr;
  out.observed = timecourses * sources;
  Rng rng(seed);
  for (long v = 0; v < out.observed.cols(); ++v) {
    for (long t = 0; t < out.observed.rows(); ++t) {
      out.observed(t, v) += err_sd * rng.normal();
    }
  }
  return out;
}

}  // namespace tica
