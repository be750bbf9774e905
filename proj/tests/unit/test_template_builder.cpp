#include <doctest.h>

#include <vector>

#include "helpers.hpp"
#include "tica/template_prior.hpp"

using namespace tica;

namespace {

std::vector<SubjectEstimate> paired(const std::vector<Matrix>& s1,
                                    const std::vector<Matrix>& s2) {
  std::vector<SubjectEstimate> est;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    est.push_back({static_cast<int>(i), 1, s1[i]});
    est.push_back({static_cast<int>(i), 2, s2[i]});
  }
  return est;
}

}  // namespace

TEST_SUITE("template_builder") {

TEST_CASE("identical sessions put all variance between subjects") {
  std::vector<Matrix> maps;
  for (int i = 0; i < 6; ++i) {
    maps.push_back(test::random_matrix(2, 30, 300 + static_cast<std::uint64_t>(i)));
  }
  const Template t = accumulate_estimates(paired(maps, maps));
  CHECK(t.var_noise.cwiseAbs().maxCoeff() < 1e-12);
  CHECK((t.var_between - t.var_total).cwiseAbs().maxCoeff() < 1e-12);

  // var_total equals the across-subject sample variance of the maps.
  Matrix mean = Matrix::Zero(2, 30);
  for (const auto& m : maps) mean += m;
  mean /= 6.0;
  Matrix var = Matrix::Zero(2, 30);
  for (const auto& m : maps) var += (m - mean).array().square().matrix();
  var /= 5.0;
  CHECK((t.var_total - var).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((t.mean - mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("no subject effect leaves little between variance") {
  const int n = 500;
  std::vector<Matrix> s1, s2;
  const Matrix mu = test::random_matrix(1, 40, 1);
  for (int i = 0; i < n; ++i) {
    s1.push_back(mu + test::random_matrix(1, 40, 4000 + 2 * i));
    s2.push_back(mu + test::random_matrix(1, 40, 4001 + 2 * i));
  }
  const Template t = accumulate_estimates(paired(s1, s2));
  // Noise variance is 1; the truncated between map should be far smaller.
  CHECK(t.var_between.mean() < 0.1);
  CHECK(t.var_noise.mean() == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("recovers the generating variance decomposition") {
  const int n = 500;
  const Matrix mu = test::random_matrix(1, 20, 2);
  std::vector<Matrix> s1, s2;
  for (int i = 0; i < n; ++i) {
    const Matrix b = test::random_matrix(1, 20, 9000 + 3 * i, 2.0);  // var 4
    s1.push_back(mu + b + test::random_matrix(1, 20, 9001 + 3 * i));
    s2.push_back(mu + b + test::random_matrix(1, 20, 9002 + 3 * i));
  }
  const Template t = accumulate_estimates(paired(s1, s2));
  // Pooled means are tight at n=500; per-voxel extremes get wide margins.
  CHECK(t.var_between.mean() == doctest::Approx(4.0).epsilon(0.05));
  CHECK(t.var_noise.mean() == doctest::Approx(1.0).epsilon(0.05));
  CHECK(((t.var_between.array() - 4.0).abs() / 4.0).maxCoeff() < 0.35);
  CHECK((t.var_noise.array() - 1.0).abs().maxCoeff() < 0.3);
}

TEST_CASE("subject order does not matter") {
  std::vector<Matrix> s1, s2;
  for (int i = 0; i < 5; ++i) {
    s1.push_back(test::random_matrix(2, 20, 70 + static_cast<std::uint64_t>(i)));
    s2.push_back(test::random_matrix(2, 20, 80 + static_cast<std::uint64_t>(i)));
  }
  const Template a = accumulate_estimates(paired(s1, s2));

  std::vector<SubjectEstimate> shuffled;
  for (int i = 4; i >= 0; --i) {
    shuffled.push_back({i, 2, s2[static_cast<std::size_t>(i)]});
    shuffled.push_back({i, 1, s1[static_cast<std::size_t>(i)]});
  }
  const Template b = accumulate_estimates(shuffled);
  CHECK(a.mean == b.mean);
  CHECK(a.var_between == b.var_between);
  CHECK(a.var_total == b.var_total);
  CHECK(a.var_noise == b.var_noise);
}

TEST_CASE("scaling the estimates scales moments consistently") {
  std::vector<Matrix> s1, s2;
  for (int i = 0; i < 4; ++i) {
    s1.push_back(test::random_matrix(1, 15, 90 + static_cast<std::uint64_t>(i)));
    s2.push_back(test::random_matrix(1, 15, 95 + static_cast<std::uint64_t>(i)));
  }
  const Template a = accumulate_estimates(paired(s1, s2));
  const double k = 3.0;
  std::vector<Matrix> k1, k2;
  for (const auto& m : s1) k1.push_back(k * m);
  for (const auto& m : s2) k2.push_back(k * m);
  const Template b = accumulate_estimates(paired(k1, k2));
  CHECK((b.mean - k * a.mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((b.var_total - k * k * a.var_total).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((b.var_noise - k * k * a.var_noise).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("cohort structure is validated") {
  std::vector<SubjectEstimate> est;
  est.push_back({0, 1, test::random_matrix(1, 10, 1)});
  est.push_back({0, 2, test::random_matrix(1, 10, 2)});
  est.push_back({1, 1, test::random_matrix(1, 10, 3)});
  CHECK_THROWS_AS(accumulate_estimates(est), InconsistentCohort);

  est.push_back({1, 2, test::random_matrix(1, 11, 4)});
  CHECK_THROWS_AS(accumulate_estimates(est), InconsistentCohort);

  std::vector<SubjectEstimate> single;
  single.push_back({0, 1, test::random_matrix(1, 10, 1)});
  single.push_back({0, 2, test::random_matrix(1, 10, 2)});
  CHECK_THROWS_AS(accumulate_estimates(single), DegenerateInput);
}

TEST_CASE("truncation keeps the decomposition ordered") {
  std::vector<Matrix> s1, s2;
  for (int i = 0; i < 8; ++i) {
    s1.push_back(test::random_matrix(2, 25, 500 + static_cast<std::uint64_t>(i)));
    s2.push_back(test::random_matrix(2, 25, 600 + static_cast<std::uint64_t>(i)));
  }
  const Template t = accumulate_estimates(paired(s1, s2));
  CHECK(t.var_between.minCoeff() >= 0.0);
  CHECK(((t.var_total - t.var_between).array() >= -1e-12).all());
  CHECK(t.var_floor().minCoeff() > 0.0);
  CHECK(t.var_between_floored().minCoeff() > 0.0);
}

TEST_CASE("pipeline runs end to end on both split modes") {
  const Matrix s_grp = test::random_matrix(2, 200, 42);
  std::vector<std::vector<Matrix>> halve_cohort, session_cohort;
  for (int i = 0; i < 4; ++i) {
    const std::uint64_t seed = 700 + static_cast<std::uint64_t>(i);
    Matrix m = test::random_matrix(40, 2, seed);
    Matrix x = m * s_grp + test::random_matrix(40, 200, seed + 50, 0.2);
    halve_cohort.push_back({x});
    session_cohort.push_back({x.topRows(20), x.bottomRows(20)});
  }
  const Template a = build_template(halve_cohort, s_grp, Split::halve);
  CHECK(a.l == 2);
  CHECK(a.v == 200);
  CHECK(a.n_subjects == 4);
  const Template b =
      build_template(session_cohort, s_grp, Split::provided_sessions);
  CHECK(b.l == 2);

  // Thread count does not change the reduction.
  const Template c = build_template(halve_cohort, s_grp, Split::halve,
                                    Scaling::temporal_sd, 3);
  CHECK(a.mean == c.mean);
  CHECK(a.var_between == c.var_between);
}

TEST_CASE("serialization round-trips") {
  std::vector<Matrix> s1, s2;
  for (int i = 0; i < 3; ++i) {
    s1.push_back(test::random_matrix(2, 12, 30 + static_cast<std::uint64_t>(i)));
    s2.push_back(test::random_matrix(2, 12, 40 + static_cast<std::uint64_t>(i)));
  }
  const Template t = accumulate_estimates(paired(s1, s2));
  test::TempDir dir("tplio");
  save_template(dir.str() + "/tpl", t);
  const Template back = load_template(dir.str() + "/tpl");
  CHECK(back.l == t.l);
  CHECK(back.v == t.v);
  CHECK(back.n_subjects == t.n_subjects);
  CHECK(back.mean == t.mean);
  CHECK(back.var_between == t.var_between);
  CHECK(back.var_total == t.var_total);
  CHECK(back.var_noise == t.var_noise);

  CHECK_THROWS_AS(load_template(dir.str() + "/missing"), MissingArtifact);
}

}  // TEST_SUITE
