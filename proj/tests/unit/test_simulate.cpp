#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "tica/metrics.hpp"
#include "tica/simulate.hpp"

using namespace tica;

namespace {

double sigma_k(double fwhm) {
  return fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
}

}  // namespace

TEST_SUITE("simulate") {

TEST_CASE("gaussian kernel geometry") {
  const Grid grid;
  CHECK(grid.size() == 2530);
  const Vector map = gaussian_source(grid, {20.0, 20.0}, 5.0, 20.0);
  REQUIRE(map.size() == grid.size());
  // Peak sits at the centre voxel; half maximum at fwhm/2 from it.
  CHECK(map(20 * grid.width + 20) == 5.0);
  CHECK(map(20 * grid.width + 30) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(map(30 * grid.width + 20) == doctest::Approx(2.5).epsilon(1e-12));

  SUBCASE("far tails are truncated to exact zero") {
    const Vector narrow = gaussian_source(grid, {22.0, 27.0}, 5.0, 10.0);
    CHECK(narrow(0) == 0.0);
    CHECK(narrow.cwiseAbs().maxCoeff() == 5.0);
    // Every nonzero entry clears the truncation threshold.
    bool all_clear = true;
    for (long i = 0; i < narrow.size(); ++i) {
      if (narrow(i) != 0.0 && narrow(i) < 5e-3) all_clear = false;
    }
    CHECK(all_clear);
  }

  SUBCASE("interior kernel mass matches the continuous integral") {
    const Vector narrow = gaussian_source(grid, {22.0, 27.0}, 5.0, 10.0);
    const double s2 = sigma_k(10.0) * sigma_k(10.0);
    const double expected = 5.0 * 2.0 * std::numbers::pi * s2;
    CHECK(narrow.sum() == doctest::Approx(expected).epsilon(0.02));
  }
}

TEST_CASE("catalogued source layouts") {
  const SourceSpec a = sima_spec();
  CHECK(a.n_sources() == 3);
  CHECK(a.n_template() == 3);
  CHECK(a.n_nuisance() == 0);
  for (double amp : a.amplitudes) CHECK(amp == 5.0);
  CHECK(a.fwhm[0] == 30.0);
  CHECK(a.fwhm[1] == 40.0);
  CHECK(a.fwhm[2] == 45.0);
  CHECK(a.centers[0].row == 12.0);
  CHECK(a.centers[0].col == 15.0);
  CHECK(a.centers[1].row == 35.0);
  CHECK(a.centers[1].col == 40.0);
  CHECK(a.centers[2].row == 15.0);
  CHECK(a.centers[2].col == 40.0);
  CHECK_NOTHROW(a.validate());

  const SourceSpec ord = order_study_spec();
  CHECK(ord.n_sources() == 4);
  CHECK(ord.n_template() == 2);
  CHECK(ord.n_nuisance() == 2);
  CHECK(ord.roles[0] == Role::template_ic);
  CHECK(ord.roles[1] == Role::template_ic);
  CHECK(ord.roles[2] == Role::nuisance_ic);
  CHECK(ord.roles[3] == Role::nuisance_ic);
  CHECK(ord.centers[3].row == 35.0);
  CHECK(ord.centers[3].col == 12.0);
  CHECK(ord.fwhm[3] == 35.0);

  const SourceSpec c = simc_spec();
  CHECK(c.n_sources() == 9);
  CHECK(c.n_template() == 6);
  CHECK(c.n_nuisance() == 3);
  for (int i = 0; i < 6; ++i) CHECK(c.roles[i] == Role::template_ic);
  for (int i = 6; i < 9; ++i) CHECK(c.roles[i] == Role::nuisance_ic);
  for (double f : c.fwhm) CHECK(f == 12.0);
  // 3x3 lattice: rows {8,23,38} by cols {9,27,45}, row-major order.
  CHECK(c.centers[0].row == 8.0);
  CHECK(c.centers[0].col == 9.0);
  CHECK(c.centers[4].row == 23.0);
  CHECK(c.centers[4].col == 27.0);
  CHECK(c.centers[8].row == 38.0);
  CHECK(c.centers[8].col == 45.0);

  SUBCASE("lattice sources barely overlap") {
    const Matrix maps = source_maps(c);
    for (int i = 0; i < 9; ++i) {
      for (int j = i + 1; j < 9; ++j) {
        CHECK(std::abs(pearson(maps.row(i).transpose(),
                               maps.row(j).transpose())) < 0.2);
      }
    }
  }

  SUBCASE("invalid geometry is rejected") {
    SourceSpec bad = sima_spec();
    bad.fwhm[1] = 0.0;
    CHECK_THROWS_AS(bad.validate(), DegenerateInput);
    bad = sima_spec();
    bad.centers[0].row = 46.0;
    CHECK_THROWS_AS(bad.validate(), DegenerateInput);
    bad = sima_spec();
    bad.roles.pop_back();
    CHECK_THROWS_AS(bad.validate(), DimensionMismatch);
  }
}

TEST_CASE("population priors scale with the mean maps") {
  const SourceSpec spec = simc_spec();
  const Template prior = population_prior(spec, 0.5);
  CHECK(prior.l == 9);
  CHECK(prior.v == Grid{}.size());
  const Matrix maps = source_maps(spec);
  CHECK((prior.mean - maps).cwiseAbs().maxCoeff() == 0.0);
  CHECK((prior.var_between - 0.5 * maps.cwiseAbs()).cwiseAbs().maxCoeff() ==
        0.0);

  const Template tpl = population_template(spec, 0.5);
  CHECK(tpl.l == 6);
  CHECK((tpl.mean - maps.topRows(6)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("subject draws follow the population law") {
  Template tpl;
  tpl.l = 1;
  tpl.v = 50;
  tpl.n_subjects = 0;
  tpl.mean = test::random_matrix(1, 50, 42).cwiseAbs() + Matrix::Constant(1, 50, 0.2);
  tpl.var_between = 0.5 * tpl.mean.cwiseAbs();
  tpl.var_total = tpl.var_between;
  tpl.var_noise = Matrix::Zero(1, 50);

  SUBCASE("zero variance reproduces the mean exactly") {
    Template fixed = tpl;
    fixed.var_between.setZero();
    const Matrix draw = sample_subject_a(fixed, 7);
    CHECK((draw - fixed.mean).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("moments converge over many draws") {
    const int n = 10000;
    Matrix sum = Matrix::Zero(1, 50);
    Matrix sum_sq = Matrix::Zero(1, 50);
    for (int i = 0; i < n; ++i) {
      const Matrix d = sample_subject_a(tpl, 1000 + i);
      sum += d;
      sum_sq += d.cwiseProduct(d);
    }
    const Matrix mean = sum / n;
    const Matrix var = sum_sq / n - mean.cwiseProduct(mean);
    for (long j = 0; j < 50; ++j) {
      const double se = std::sqrt(tpl.var_between(0, j) / n);
      CHECK(std::abs(mean(0, j) - tpl.mean(0, j)) < 4.0 * se);
    }
    // Pooled variance ratio is tight at this sample size.
    CHECK(var.sum() / tpl.var_between.sum() ==
          doctest::Approx(1.0).epsilon(0.05));
  }

  SUBCASE("draws are reproducible") {
    CHECK(sample_subject_a(tpl, 5) == sample_subject_a(tpl, 5));
    CHECK(sample_subject_a(tpl, 5) != sample_subject_a(tpl, 6));
  }
}

TEST_CASE("perturbed subjects stay on the grid") {
  const SourceSpec base = sima_spec();

  SUBCASE("zero spread reproduces the base maps") {
    const PerturbSd none{0.0, 0.0, 0.0};
    const Matrix maps = sample_subject_b(base, none, 3);
    CHECK((maps - source_maps(base)).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("draws are reproducible and vary with the seed") {
    const Matrix a = sample_subject_b(base, 11);
    const Matrix b = sample_subject_b(base, 11);
    const Matrix c = sample_subject_b(base, 12);
    CHECK(a == b);
    CHECK(a != c);
    CHECK(a.rows() == 3);
    CHECK(a.cols() == Grid{}.size());
  }

  SUBCASE("hopeless centre spread is refused") {
    PerturbSd wild;
    wild.loc = 1e9;
    CHECK_THROWS_AS(sample_subject_b(base, wild, 21), PerturbationOutOfGrid);
  }

  SUBCASE("pooled template matches long-run draw moments") {
    const Template mc = simb_template(base, 4000, 99);
    CHECK(mc.l == 3);
    // Spot-check the pooled mean against a fresh independent sample.
    Matrix fresh = Matrix::Zero(3, mc.v);
    for (int i = 0; i < 500; ++i) {
      fresh += sample_subject_b(base, PerturbSd{}, 5000 + i);
    }
    fresh /= 500.0;
    // Peak regions agree loosely between the two Monte Carlo estimates.
    for (int q = 0; q < 3; ++q) {
      long peak;
      mc.mean.row(q).cwiseAbs().maxCoeff(&peak);
      CHECK(mc.mean(q, peak) ==
            doctest::Approx(fresh(q, peak)).epsilon(0.05));
    }
    CHECK(mc.var_between.minCoeff() >= 0.0);
    CHECK(mc.var_between.maxCoeff() > 0.0);
    CHECK_THROWS_AS(simb_template(base, 1, 99), DegenerateInput);
  }
}

TEST_CASE("time courses are standardized AR sequences") {
  const long t = 10000;
  const Matrix tc = gen_timecourses(t, 3, 77);
  REQUIRE(tc.rows() == t);
  REQUIRE(tc.cols() == 3);
  for (int q = 0; q < 3; ++q) {
    CHECK(std::abs(tc.col(q).mean()) < 1e-12);
    CHECK(tc.col(q).squaredNorm() / (t - 1) ==
          doctest::Approx(1.0).epsilon(1e-12));
    const double lag1 = tc.col(q).head(t - 1).dot(tc.col(q).tail(t - 1)) /
                        tc.col(q).squaredNorm();
    CHECK(std::abs(lag1 - 0.3) < 0.05);
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      CHECK(std::abs(tc.col(a).dot(tc.col(b))) / (t - 1) < 0.1);
    }
  }
  CHECK(gen_timecourses(200, 2, 5) == gen_timecourses(200, 2, 5));
}

TEST_CASE("signal strength summarises the activated extremes") {
  Matrix sources = Matrix::Zero(1, 100);
  sources(0, 17) = 3.0;
  // ceil(0.01 * 100) = 1 voxel: the single 3.0 entry.
  CHECK(signal_sd(sources) == doctest::Approx(3.0).epsilon(1e-12));

  Matrix two = Matrix::Zero(2, 100);
  two(0, 3) = 3.0;
  two(1, 9) = 4.0;
  // Root mean of per-source top-voxel squares: sqrt((9 + 16) / 2).
  CHECK(signal_sd(two) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
}

TEST_CASE("observed data respect the requested noise level") {
  const Matrix sources = source_maps(sima_spec());
  const Matrix tc = gen_timecourses(2400, 3, 31);

  SUBCASE("noise matches the implied scale") {
    const SubjectData d = gen_observed(sources, tc, 2.0, 55);
    CHECK(d.snr == 2.0);
    CHECK(d.observed.rows() == tc.rows());
    CHECK(d.observed.cols() == sources.cols());
    const Matrix resid = d.observed - tc * sources;
    const double sig = signal_sd(sources);
    const double want = sig / 2.0;
    const double got =
        std::sqrt(resid.squaredNorm() / (resid.rows() * resid.cols()));
    CHECK(got == doctest::Approx(want).epsilon(0.05));

    // Per-voxel variances pool to the same value at this length.
    double pooled = 0.0;
    for (long j = 0; j < resid.cols(); ++j) {
      const double m = resid.col(j).mean();
      pooled += (resid.col(j).array() - m).matrix().squaredNorm() /
                (resid.rows() - 1);
    }
    pooled /= resid.cols();
    CHECK(pooled == doctest::Approx(want * want).epsilon(0.05));
  }

  SUBCASE("enormous ratios are capped") {
    const Matrix tc_short = gen_timecourses(40, 3, 32);
    const SubjectData d = gen_observed(sources, tc_short, 1e9, 56);
    const Matrix clean = tc_short * sources;
    const double rel = (d.observed - clean).norm() / clean.norm();
    CHECK(rel > 0.0);
    CHECK(rel < 1e-4);
  }

  SUBCASE("degenerate requests are rejected") {
    const Matrix tc_short = gen_timecourses(40, 3, 33);
    CHECK_THROWS_AS(gen_observed(Matrix::Zero(3, 2530), tc_short, 1.0, 57),
                    DegenerateInput);
    CHECK_THROWS_AS(gen_observed(sources, tc_short, 0.0, 57), DegenerateInput);
    CHECK_THROWS_AS(gen_observed(sources, gen_timecourses(40, 2, 33), 1.0, 57),
                    DimensionMismatch);
  }

  SUBCASE("generation is reproducible") {
    const Matrix tc_short = gen_timecourses(40, 3, 34);
    CHECK(gen_observed(sources, tc_short, 0.5, 58).observed ==
          gen_observed(sources, tc_short, 0.5, 58).observed);
  }
}

}  // TEST_SUITE
