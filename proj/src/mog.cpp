#include "tica/mog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "tica/rng.hpp"

namespace tica {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

// Sorts components by variance ascending so the widest sits last.
void sort_by_variance(MoGParams& p) {
  std::vector<int> idx(static_cast<std::size_t>(p.m));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return p.vars(a) < p.vars(b); });
  Vector w(p.m), mu(p.m), var(p.m);
  for (int i = 0; i < p.m; ++i) {
    w(i) = p.weights(idx[static_cast<std::size_t>(i)]);
    mu(i) = p.means(idx[static_cast<std::size_t>(i)]);
    var(i) = p.vars(idx[static_cast<std::size_t>(i)]);
  }
  p.weights = w;
  p.means = mu;
  p.vars = var;
}

}  // namespace

double mog_logpdf(const MoGParams& params, double x) {
  double best = -std::numeric_limits<double>::infinity();
  Vector terms(params.m);
  for (int j = 0; j < params.m; ++j) {
    terms(j) = std::log(params.weights(j)) +
               log_normal_pdf(x, params.means(j), params.vars(j));
    best = std::max(best, terms(j));
  }
  if (!std::isfinite(best)) return best;
  double acc = 0.0;
  for (int j = 0; j < params.m; ++j) acc += std::exp(terms(j) - best);
  return best + std::log(acc);
}

double mog_loglik(const MoGParams& params, const Vector& samples) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < samples.size(); ++i)
    acc += mog_logpdf(params, samples(i));
  return acc;
}

MoGParams fit_mog(const Vector& samples, int m, std::uint64_t seed) {
  const long n = samples.size();
  if (m < 1) throw DegenerateInput("fit_mog: m must be >= 1");
  if (n < 10L * m) throw DegenerateInput("fit_mog: need at least 10m samples");

  const double mean_all = samples.mean();
  const double var_all =
      (samples.array() - mean_all).square().sum() / static_cast<double>(n - 1);
  if (!(var_all > 0.0)) throw DegenerateInput("fit_mog: constant sample");
  const double var_floor = 1e-6 * var_all;

  // Quantile-split initialization on the sorted sample.
  std::vector<double> sorted(samples.data(), samples.data() + n);
  std::sort(sorted.begin(), sorted.end());
  MoGParams p;
  p.m = m;
  p.var_floor = var_floor;
  p.weights = Vector::Constant(m, 1.0 / m);
  p.means = Vector::Zero(m);
  p.vars = Vector::Zero(m);
  for (int j = 0; j < m; ++j) {
    const long lo = n * j / m;
    const long hi = n * (j + 1) / m;
    const long len = hi - lo;
    double mu = 0.0;
    for (long i = lo; i < hi; ++i) mu += sorted[static_cast<std::size_t>(i)];
    mu /= static_cast<double>(len);
    double ss = 0.0;
    for (long i = lo; i < hi; ++i) {
      const double d = sorted[static_cast<std::size_t>(i)] - mu;
      ss += d * d;
    }
    p.weights(j) = static_cast<double>(len) / static_cast<double>(n);
    p.means(j) = mu;
    p.vars(j) = std::max(ss / std::max<double>(1.0, static_cast<double>(len - 1)),
                         var_floor);
  }
  // Degenerate groups (repeated values) collapse onto the same moments; the
  // seed jitters them apart deterministically.
  Rng rng(derive_seed(seed, 0x6d6f67));
  for (int j = 1; j < m; ++j) {
    if (std::abs(p.means(j) - p.means(j - 1)) < 1e-12 * std::sqrt(var_all))
      p.means(j) += std::sqrt(var_floor) * (1.0 + rng.uniform());
  }

  // EM until the log likelihood stalls.
  const int max_iters = 1000;
  double prev_ll = -std::numeric_limits<double>::infinity();
  Matrix resp(n, m);
  for (int iter = 0; iter < max_iters; ++iter) {
    // E-step: responsibilities via log-sum-exp; the running total of the
    // per-sample normalizers is the current log likelihood.
    double ll = 0.0;
    for (long i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < m; ++j) {
        resp(i, j) = std::log(p.weights(j)) +
                     log_normal_pdf(samples(i), p.means(j), p.vars(j));
        best = std::max(best, resp(i, j));
      }
      double denom = 0.0;
      for (int j = 0; j < m; ++j) {
        resp(i, j) = std::exp(resp(i, j) - best);
        denom += resp(i, j);
      }
      resp.row(i) /= denom;
      ll += best + std::log(denom);
    }

    // M-step.
    for (int j = 0; j < m; ++j) {
      const double nj = resp.col(j).sum();
      if (nj < 1e-12) {
        p.weights(j) = 0.0;
        continue;  // empty component keeps its parameters
      }
      const double mu = resp.col(j).dot(samples) / nj;
      const double var =
          resp.col(j).dot((samples.array() - mu).square().matrix()) / nj;
      p.weights(j) = nj / static_cast<double>(n);
      p.means(j) = mu;
      p.vars(j) = std::max(var, var_floor);
    }

    if (std::isfinite(prev_ll) &&
        std::abs(ll - prev_ll) <= 1e-10 * std::abs(prev_ll))
      break;
    prev_ll = ll;
  }

  sort_by_variance(p);
  return p;
}

Vector sample_mog(const MoGParams& params, long n, std::uint64_t seed) {
  if (n < 0) throw DegenerateInput("sample_mog: negative count");
  Rng rng(seed);
  Vector cumulative(params.m);
  double acc = 0.0;
  for (int j = 0; j < params.m; ++j) {
    acc += params.weights(j);
    cumulative(j) = acc;
  }
  Vector out(n);
  for (long i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    int j = 0;
    while (j + 1 < params.m && u > cumulative(j)) ++j;
    out(i) = rng.normal(params.means(j), std::sqrt(params.vars(j)));
  }
  return out;
}

}  // namespace tica
