#include "tica/infomax.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "tica/rng.hpp"

namespace tica {

namespace {

double row_skewness(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double n = static_cast<double>(row.size());
  const double mean = row.mean();
  const Eigen::ArrayXd d = row.array() - mean;
  const double m2 = d.square().sum() / n;
  if (!(m2 > 0.0)) return 0.0;
  const double m3 = d.cube().sum() / n;
  return m3 / std::pow(m2, 1.5);
}

double pearson_abs(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const Eigen::RowVectorXd da = a.array() - a.mean();
  const Eigen::RowVectorXd db = b.array() - b.mean();
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (!(denom > 0.0)) return 0.0;
  return std::abs(da.dot(db) / denom);
}

// Least-squares mixing of y on the (nonsingular) source rows.
Matrix mixing_for(const Matrix& y, const Matrix& sources) {
  Matrix gram = sources * sources.transpose();
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    throw NumericalError("infomax: singular source Gram");
  return ldlt.solve(sources * y.transpose()).transpose();
}

// Mean log likelihood per sample of the logistic-density model,
// log|det W| + mean_v sum_q log g'(u), up to the whitening constant.
double logistic_loglik(const Matrix& w, const Matrix& u) {
  const double logdet =
      w.partialPivLu().matrixLU().diagonal().array().abs().log().sum();
  // log g'(u) = -u - 2 log(1 + e^-u), evaluated stably for both signs.
  const auto stable = [](double x) {
    const double a = std::abs(x);
    return -a - 2.0 * std::log1p(std::exp(-a));
  };
  double acc = 0.0;
  for (Eigen::Index c = 0; c < u.cols(); ++c)
    for (Eigen::Index r = 0; r < u.rows(); ++r) acc += stable(u(r, c));
  return logdet + acc / static_cast<double>(u.cols());
}

}  // namespace

Matrix fix_signs(const Matrix& sources) {
  Matrix out = sources;
  for (Eigen::Index q = 0; q < out.rows(); ++q)
    if (row_skewness(out.row(q)) < 0.0) out.row(q) = -out.row(q);
  return out;
}

IcaResult infomax_single(const Matrix& y, int q_out, std::uint64_t seed) {
  const Eigen::Index q_in = y.rows();
  const Eigen::Index v = y.cols();
  if (q_out < 1 || q_out > q_in)
    throw DegenerateInput("infomax: q_out must be in [1, rows]");
  if (v < 2 * q_in) throw DegenerateInput("infomax: too few samples");

  // Whiten the top q_out principal directions of y.
  Matrix cov(q_in, q_in);
  cov.setZero();
  cov.selfadjointView<Eigen::Lower>().rankUpdate(y, 1.0 / static_cast<double>(v));
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov.selfadjointView<Eigen::Lower>());
  if (es.info() != Eigen::Success)
    throw NumericalError("infomax: whitening eigendecomposition failed");
  const Vector evals = es.eigenvalues().reverse();
  if (!(evals(q_out - 1) > 1e-12 * std::max(evals(0), 1e-300)))
    throw DegenerateInput("infomax: requested dimension exceeds data rank");
  const Matrix u1 = es.eigenvectors().rowwise().reverse().leftCols(q_out);
  const Matrix whiten =
      evals.head(q_out).cwiseSqrt().cwiseInverse().asDiagonal() *
      u1.transpose();
  const Matrix yw = whiten * y;

  // Random orthonormal start.
  Rng rng(derive_seed(seed, 0x696d78));
  Matrix w(q_out, q_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
  {
    Eigen::HouseholderQR<Matrix> qr(w);
    w = qr.householderQ() * Matrix::Identity(q_out, q_out);
  }

  // One epoch = a sequential pass of natural-gradient block updates,
  //   W += lr (I + (1 - 2 g(u)) u' / n_block) W,
  // followed by a full-data likelihood check. A decrease rejects the whole
  // epoch and halves the rate.
  const Matrix eye = Matrix::Identity(q_out, q_out);
  const long block = std::max<long>(
      1, static_cast<long>(std::ceil(
             std::min(5.0 * std::log(static_cast<double>(v)), 0.3 * v))));
  double lr = 0.01;
  double best_ll = logistic_loglik(w, w * yw);
  double rel_change = std::numeric_limits<double>::infinity();
  IcaResult out;
  int epoch = 0;
  for (; epoch < 500; ++epoch) {
    const Matrix w_start = w;
    bool blew_up = false;
    for (long b0 = 0; b0 < v; b0 += block) {
      const long nb = std::min(block, v - b0);
      const Matrix ub = w * yw.middleCols(b0, nb);
      const Matrix score = (1.0 - 2.0 / (1.0 + (-ub.array()).exp())).matrix();
      w += lr *
           (eye + score * ub.transpose() / static_cast<double>(nb)) * w;
      if (!w.allFinite()) {
        blew_up = true;
        break;
      }
    }
    const double ll = blew_up ? -std::numeric_limits<double>::infinity()
                              : logistic_loglik(w, w * yw);
    if (!(ll >= best_ll)) {
      w = w_start;  // retake the epoch more cautiously
      lr *= 0.5;
      if (lr < 1e-12) break;
      continue;
    }
    rel_change = (w - w_start).norm() / w_start.norm();
    best_ll = ll;
    if (rel_change < 1e-6) {
      out.converged = true;
      ++epoch;
      break;
    }
  }
  out.n_epochs = epoch;
  if (!out.converged && rel_change > 1e-3)
    log_warn("infomax: epoch cap reached with relative weight change " +
             std::to_string(rel_change));

  Matrix sources = w * yw;
  for (Eigen::Index q = 0; q < sources.rows(); ++q) {
    const double sd = std::sqrt(sources.row(q).squaredNorm() /
                                static_cast<double>(v - 1));
    if (sd > 0.0) sources.row(q) /= sd;
  }
  out.sources = fix_signs(sources);
  out.mixing = mixing_for(y, out.sources);
  out.cluster_quality = Vector::Ones(q_out);
  return out;
}

IcaResult infomax_restarts(const Matrix& y, int q_out, int n_runs,
                           std::uint64_t seed) {
  if (n_runs < 1) throw DegenerateInput("infomax: n_runs must be >= 1");
  std::vector<IcaResult> runs;
  runs.reserve(static_cast<std::size_t>(n_runs));
  bool all_converged = true;
  int max_epochs = 0;
  for (int r = 0; r < n_runs; ++r) {
    runs.push_back(infomax_single(y, q_out, derive_seed(seed, static_cast<std::uint64_t>(r))));
    all_converged = all_converged && runs.back().converged;
    max_epochs = std::max(max_epochs, runs.back().n_epochs);
  }

  // Pool all maps and agglomerate with average linkage on 1 - |r| until
  // q_out clusters remain. Ties merge the lowest-indexed pair.
  const int n_maps = n_runs * q_out;
  Matrix maps(n_maps, y.cols());
  for (int r = 0; r < n_runs; ++r)
    maps.middleRows(r * q_out, q_out) = runs[static_cast<std::size_t>(r)].sources;

  Matrix dist(n_maps, n_maps);
  for (int i = 0; i < n_maps; ++i) {
    dist(i, i) = 0.0;
    for (int j = i + 1; j < n_maps; ++j) {
      const double d = 1.0 - pearson_abs(maps.row(i), maps.row(j));
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }

  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < n_maps; ++i) clusters.push_back({i});
  while (static_cast<int>(clusters.size()) > q_out) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        double acc = 0.0;
        for (int a : clusters[i])
          for (int b : clusters[j]) acc += dist(a, b);
        const double d = acc / static_cast<double>(clusters[i].size() *
                                                   clusters[j].size());
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(),
                        clusters[bj].end());
    clusters.erase(clusters.begin() + static_cast<long>(bj));
  }

  // Centroid = sign-aligned mean; quality = mean pairwise |r| (1 for
  // singletons).
  Matrix centroids(q_out, y.cols());
  Vector quality(q_out);
  for (int c = 0; c < q_out; ++c) {
    const auto& members = clusters[static_cast<std::size_t>(c)];
    const Eigen::RowVectorXd ref = maps.row(members.front());
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(y.cols());
    for (int idx : members) {
      const Eigen::RowVectorXd m = maps.row(idx);
      const double corr = (m.array() - m.mean())
                              .matrix()
                              .dot((ref.array() - ref.mean()).matrix());
      acc += corr < 0.0 ? (-m).eval() : m;
    }
    acc /= static_cast<double>(members.size());
    const double sd =
        std::sqrt(acc.squaredNorm() / static_cast<double>(y.cols() - 1));
    if (sd > 0.0) acc /= sd;
    centroids.row(c) = acc;
    if (members.size() == 1) {
      quality(c) = 1.0;
    } else {
      double total = 0.0;
      long pairs = 0;
      for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = i + 1; j < members.size(); ++j) {
          total += 1.0 - dist(members[i], members[j]);
          ++pairs;
        }
      quality(c) = total / static_cast<double>(pairs);
    }
  }

  std::vector<int> order(static_cast<std::size_t>(q_out));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return quality(a) > quality(b); });

  IcaResult out;
  out.sources = Matrix(q_out, y.cols());
  out.cluster_quality = Vector(q_out);
  for (int c = 0; c < q_out; ++c) {
    out.sources.row(c) = centroids.row(order[static_cast<std::size_t>(c)]);
    out.cluster_quality(c) = quality(order[static_cast<std::size_t>(c)]);
  }
  out.sources = fix_signs(out.sources);
  out.mixing = mixing_for(y, out.sources);
  out.converged = all_converged;
  out.n_epochs = max_epochs;
  return out;
}

}  // namespace tica
