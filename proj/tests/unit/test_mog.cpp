#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tica/mog.hpp"

using namespace tica;

TEST_SUITE("mog") {

TEST_CASE("single component recovers a standard normal") {
  Rng rng(1);
  Vector x(10000);
  for (long i = 0; i < x.size(); ++i) x(i) = rng.normal();
  const MoGParams p = fit_mog(x, 1, 0);
  REQUIRE(p.m == 1);
  CHECK(p.weights(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(p.means(0)) < 0.05);
  CHECK(std::abs(p.vars(0) - 1.0) < 0.1);
}

TEST_CASE("two-component recovery with activation last") {
  Rng rng(2);
  Vector x(20000);
  for (long i = 0; i < x.size(); ++i) {
    x(i) = rng.uniform() < 0.9 ? rng.normal() : 5.0 * rng.normal();
  }
  const MoGParams p = fit_mog(x, 2, 0);
  REQUIRE(p.m == 2);
  CHECK(p.vars(1) == p.vars.maxCoeff());
  CHECK(std::abs(p.weights(0) - 0.9) < 0.05);
  CHECK(std::abs(p.weights(1) - 0.1) < 0.05);
  CHECK(p.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("richer mixtures never lose likelihood") {
  Rng rng(3);
  Vector x(5000);
  for (long i = 0; i < x.size(); ++i) x(i) = rng.logistic();
  const MoGParams p1 = fit_mog(x, 1, 0);
  const MoGParams p3 = fit_mog(x, 3, 0);
  CHECK(mog_loglik(p3, x) >= mog_loglik(p1, x) - 1e-9);
}

TEST_CASE("logpdf closed forms") {
  MoGParams p;
  p.m = 1;
  p.weights = Vector::Constant(1, 1.0);
  p.means = Vector::Zero(1);
  p.vars = Vector::Constant(1, 1.0);
  CHECK(mog_logpdf(p, 0.0) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));

  MoGParams q;
  q.m = 2;
  q.weights = Vector(2);
  q.weights << 0.3, 0.7;
  q.means = Vector::Constant(2, 1.5);
  q.vars = Vector::Constant(2, 2.0);
  MoGParams single;
  single.m = 1;
  single.weights = Vector::Constant(1, 1.0);
  single.means = Vector::Constant(1, 1.5);
  single.vars = Vector::Constant(1, 2.0);
  for (double x : {-3.0, 0.0, 1.5, 4.0}) {
    CHECK(mog_logpdf(q, x) ==
          doctest::Approx(mog_logpdf(single, x)).epsilon(1e-12));
  }
}

TEST_CASE("density integrates to one") {
  MoGParams p;
  p.m = 3;
  p.weights = Vector(3);
  p.weights << 0.2, 0.5, 0.3;
  p.means = Vector(3);
  p.means << -2.0, 0.5, 3.0;
  p.vars = Vector(3);
  p.vars << 0.5, 1.0, 4.0;
  const double lo = -30.0, hi = 30.0;
  const long n = 200000;
  const double h = (hi - lo) / n;
  double integral = 0.0;
  for (long i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    integral += w * std::exp(mog_logpdf(p, lo + h * i));
  }
  integral *= h;
  CHECK(std::abs(integral - 1.0) < 1e-4);
}

TEST_CASE("sampler hits the requested mixture") {
  MoGParams p;
  p.m = 2;
  p.weights = Vector::Constant(2, 0.5);
  p.means = Vector(2);
  p.means << -10.0, 10.0;
  p.vars = Vector::Constant(2, 1.0);
  const Vector x = sample_mog(p, 100000, 7);
  const double frac_high =
      static_cast<double>((x.array() > 0.0).count()) / x.size();
  CHECK(std::abs(frac_high - 0.5) < 0.01);

  // Point-like component stays near its mean.
  MoGParams tight;
  tight.m = 1;
  tight.weights = Vector::Constant(1, 1.0);
  tight.means = Vector::Constant(1, 5.0);
  tight.vars = Vector::Constant(1, 1e-6);
  const Vector y = sample_mog(tight, 1000, 8);
  CHECK((y.array() - 5.0).abs().maxCoeff() < 6e-3 * 5);

  CHECK(sample_mog(p, 64, 9) == sample_mog(p, 64, 9));
}

TEST_CASE("fit is deterministic for a fixed seed") {
  Rng rng(11);
  Vector x(2000);
  for (long i = 0; i < x.size(); ++i) x(i) = rng.normal() + rng.logistic();
  const MoGParams a = fit_mog(x, 3, 5);
  const MoGParams b = fit_mog(x, 3, 5);
  CHECK(a.weights == b.weights);
  CHECK(a.means == b.means);
  CHECK(a.vars == b.vars);
}

TEST_CASE("sample-size floor") {
  Vector x(25);
  for (long i = 0; i < 25; ++i) x(i) = static_cast<double>(i);
  CHECK_THROWS_AS(fit_mog(x, 3, 0), DegenerateInput);
}

TEST_CASE("variance floor prevents collapse") {
  // Half the mass sits exactly on one point.
  Vector x(200);
  for (long i = 0; i < 100; ++i) x(i) = 0.0;
  Rng rng(13);
  for (long i = 100; i < 200; ++i) x(i) = rng.normal();
  const MoGParams p = fit_mog(x, 2, 0);
  CHECK(p.vars.minCoeff() >= p.var_floor - 1e-18);
  CHECK(p.var_floor > 0.0);
}

}  // TEST_SUITE
