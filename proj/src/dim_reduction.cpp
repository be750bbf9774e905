#include "tica/dim_reduction.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace tica {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

EigenSpectrum eigen_spectrum(const Matrix& x) {
  const Eigen::Index t = x.rows();
  const Eigen::Index v = x.cols();
  if (t < 2 || v < 2) throw DegenerateInput("eigen_spectrum: input too small");

  Matrix gram(t, t);
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0 / static_cast<double>(v));

  Eigen::SelfAdjointEigenSolver<Matrix> solver(
      gram.selfadjointView<Eigen::Lower>());
  if (solver.info() != Eigen::Success)
    throw NumericalError("eigen_spectrum: eigensolver failed");

  // Solver returns ascending order; flip to non-increasing.
  EigenSpectrum spec;
  spec.eigenvalues = solver.eigenvalues().reverse();
  spec.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return spec;
}

// Laplace evidence for the rank-k principal subspace model:
//   log p(D|k) = log p(U) - (n/2) sum_{j<=k} log lambda_j
//                - n(d-k)/2 log sigma2_k + (m+k)/2 log 2pi
//                - (1/2) log |A_Z| - (k/2) log n
// with m = dk - k(k+1)/2 and
//   log |A_Z| = sum_{i<=k} sum_{j>i} log[(1/l_j - 1/l_i)(lambda_i - lambda_j)]
//               + #pairs log n,
// where l_j = lambda_j for retained j and sigma2_k for tail j. All pair sums
// are maintained incrementally in k, so the whole scan is O(T^2).
OrderEstimate estimate_order(const Vector& eigenvalues, long n_obs) {
  const int t = static_cast<int>(eigenvalues.size());
  if (t < 3) throw DegenerateInput("estimate_order: need at least 3 eigenvalues");
  if (n_obs < 2) throw DegenerateInput("estimate_order: need n_obs >= 2");
  const double tiny =
      eigenvalues(0) > 0.0 ? 1e-12 * eigenvalues(0) : 0.0;
  // Zero-variance directions are structural (centering constraints, exact
  // projections), not sampling noise: with them in the tail the noise
  // estimate collapses near the top candidates and the evidence rises
  // spuriously. The model space is the span of the positive eigenvalues.
  int d_pos = 0;
  while (d_pos < t && eigenvalues(d_pos) > tiny) ++d_pos;
  if (d_pos < 2)
    throw DegenerateInput("estimate_order: fewer than 2 positive eigenvalues");

  const double n = static_cast<double>(n_obs);
  const double d = static_cast<double>(d_pos);
  const double log_n = std::log(n);

  OrderEstimate est;
  est.log_evidence = Vector::Constant(t - 2, kNegInf);

  double sum_log_retained = 0.0;  // sum_{j<=k} log lambda_j
  double log_pu = 0.0;            // Stiefel prior factor
  double pair_retained = 0.0;     // sum over retained-retained pairs
  double tail_cross_sum = 0.0;    // sum_{i<=k} tail_log[i]
  // tail_log[i] = sum_{j>k} log(lambda_i - lambda_j), kept current in k.
  std::vector<double> tail_log(static_cast<std::size_t>(t), 0.0);
  double tail_suffix = eigenvalues.head(d_pos).sum();  // sum_{j>k-1}

  const int k_max = std::min(t - 2, d_pos);
  for (int k = 1; k <= k_max; ++k) {
    const double lam_k = eigenvalues(k - 1);
    log_pu += std::lgamma((d - k + 1) / 2.0) -
              ((d - k + 1) / 2.0) * std::log(M_PI) - std::log(2.0);
    sum_log_retained += std::log(lam_k);
    tail_suffix -= lam_k;

    // Fold lambda_k into the retained set: it leaves every tail sum and
    // enters the retained-retained pair sum. A tie with an earlier retained
    // eigenvalue makes this and every later candidate degenerate.
    bool tie = false;
    for (int i = 0; i < k - 1; ++i) {
      const double lam_i = eigenvalues(i);
      const double diff = (1.0 / lam_k - 1.0 / lam_i) * (lam_i - lam_k);
      if (!(diff > 0.0)) {
        tie = true;
        break;
      }
      pair_retained += std::log(diff);
      const double step = std::log(lam_i - lam_k);
      tail_log[static_cast<std::size_t>(i)] -= step;
      tail_cross_sum -= step;
    }
    if (tie) break;

    if (k == d_pos) {
      // All positive variance retained: exact low rank, evidence diverges.
      est.log_evidence(k - 1) = std::numeric_limits<double>::infinity();
      break;
    }

    double fresh = 0.0;
    bool boundary_tie = false;
    for (int j = k; j < d_pos; ++j) {
      const double gap = lam_k - eigenvalues(j);
      if (!(gap > 0.0)) {
        boundary_tie = true;
        break;
      }
      fresh += std::log(gap);
    }
    if (boundary_tie) break;  // lambda_k tied with the tail
    tail_log[static_cast<std::size_t>(k - 1)] = fresh;
    tail_cross_sum += fresh;

    if (k > d_pos - 2) continue;  // single-eigenvalue tail: no candidate

    const double sigma2 = tail_suffix / (d - k);
    if (sigma2 <= 0.0) {
      // Exact low rank: evidence diverges at the first such candidate.
      est.log_evidence(k - 1) = std::numeric_limits<double>::infinity();
      break;
    }
    if (lam_k <= sigma2) {
      continue;  // retained signal at or below the noise level
    }

    // Cross pairs (retained i, tail j): the 1/l_j factor is 1/sigma2,
    // repeated once per tail eigenvalue.
    double cross_inv = 0.0;
    for (int i = 0; i < k; ++i)
      cross_inv += (d - k) * std::log(1.0 / sigma2 - 1.0 / eigenvalues(i));

    const double n_pairs =
        0.5 * k * (k - 1) + static_cast<double>(k) * (d - k);
    const double log_az =
        pair_retained + tail_cross_sum + cross_inv + n_pairs * log_n;
    const double m = d * k - k * (k + 1) / 2.0;
    est.log_evidence(k - 1) =
        log_pu - (n / 2.0) * sum_log_retained -
        (n * (d - k) / 2.0) * std::log(sigma2) +
        ((m + k) / 2.0) * std::log(2.0 * M_PI) - 0.5 * log_az -
        (k / 2.0) * log_n;
  }

  int best = 1;
  for (int k = 2; k <= t - 2; ++k)
    if (est.log_evidence(k - 1) > est.log_evidence(best - 1)) best = k;
  est.order = best;

  // Pure-noise guard: nothing beats the smallest candidate.
  bool non_increasing = true;
  for (int k = 2; k <= t - 2; ++k)
    if (est.log_evidence(k - 1) > est.log_evidence(0)) non_increasing = false;
  if (non_increasing) {
    est.order = 1;
    est.low_rank_warning = true;
  }
  return est;
}

double residual_variance(const Vector& eigenvalues, int q) {
  const int t = static_cast<int>(eigenvalues.size());
  if (q < 1 || q >= t)
    throw DegenerateInput("residual_variance: q must be in [1, T)");
  return eigenvalues.tail(t - q).mean();
}

ReducedData prewhiten(const Matrix& data, int q) {
  const EigenSpectrum spec = eigen_spectrum(data);
  const int t = static_cast<int>(spec.eigenvalues.size());

  ReducedData out;
  if (q <= 0) {
    const OrderEstimate est = estimate_order(spec.eigenvalues, data.cols());
    q = est.order;
    out.low_rank_warning = est.low_rank_warning;
  }
  if (q >= t) throw DegenerateInput("prewhiten: order leaves no residual tail");
  out.sigma2 = residual_variance(spec.eigenvalues, q);
  out.order = q;

  const Vector gap = spec.eigenvalues.head(q).array() - out.sigma2;
  if (!(gap.minCoeff() > 0.0))
    throw DegenerateInput(
        "prewhiten: retained eigenvalue does not exceed residual variance");

  out.c_diag = gap.cwiseInverse();
  out.h = gap.cwiseSqrt().cwiseInverse().asDiagonal() *
          spec.eigenvectors.leftCols(q).transpose();
  out.y = out.h * data;
  return out;
}

}  // namespace tica
