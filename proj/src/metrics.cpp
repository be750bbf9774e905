#include "tica/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "tica/infomax.hpp"

namespace tica {

double pearson(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionMismatch("pearson length mismatch");
  const long n = a.size();
  if (n < 2) throw DegenerateInput("pearson needs at least 2 entries");
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (!(denom > 0.0)) throw DegenerateInput("pearson given a constant vector");
  return da.dot(db) / denom;
}

std::vector<bool> activation_mask(const Vector& truth) {
  std::vector<bool> mask(static_cast<std::size_t>(truth.size()));
  for (long v = 0; v < truth.size(); ++v) {
    mask[static_cast<std::size_t>(v)] = truth(v) != 0.0;
  }
  return mask;
}

double corr_activated(const Vector& estimate, const Vector& truth,
                      const std::vector<bool>& mask) {
  if (estimate.size() != truth.size() ||
      mask.size() != static_cast<std::size_t>(truth.size())) {
    throw DimensionMismatch("corr_activated length mismatch");
  }
  long k = 0;
  for (const bool b : mask) k += b ? 1 : 0;
  if (k < 3) throw DegenerateInput("activation mask has fewer than 3 entries");
  Vector e(k), t(k);
  long i = 0;
  for (long v = 0; v < truth.size(); ++v) {
    if (!mask[static_cast<std::size_t>(v)]) continue;
    e(i) = estimate(v);
    t(i) = truth(v);
    ++i;
  }
  return pearson(e, t);
}

Matrix mse_map(const std::vector<Matrix>& estimates,
               const std::vector<Matrix>& truth) {
  if (estimates.size() != truth.size()) {
    throw DimensionMismatch("subject counts disagree");
  }
  const std::size_t n = estimates.size();
  if (n < 2) throw DegenerateInput("mse_map needs at least 2 subjects");
  const long l = estimates[0].rows();
  const long v = estimates[0].cols();
  Matrix mse = Matrix::Zero(l, v);
  for (std::size_t i = 0; i < n; ++i) {
    if (estimates[i].rows() != l || estimates[i].cols() != v ||
        truth[i].rows() != l || truth[i].cols() != v) {
      throw DimensionMismatch("subject map shapes disagree");
    }
    for (long q = 0; q < l; ++q) {
      const double ee = estimates[i].row(q).squaredNorm();
      const double beta =
          ee > 0.0 ? estimates[i].row(q).dot(truth[i].row(q)) / ee : 0.0;
      mse.row(q) +=
          (beta * estimates[i].row(q) - truth[i].row(q)).array().square().matrix();
    }
  }
  return mse / static_cast<double>(n);
}

std::vector<int> match_components(const Matrix& estimates,
                                  const Matrix& truth) {
  if (estimates.rows() != truth.rows() || estimates.cols() != truth.cols()) {
    throw DimensionMismatch("match_components shape mismatch");
  }
  const int k = static_cast<int>(estimates.rows());
  if (k < 1) throw DegenerateInput("match_components needs at least one row");
  const Matrix est = fix_signs(estimates);
  Matrix abs_r(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      double r = 0.0;
      try {
        r = pearson(est.row(i).transpose(), truth.row(j).transpose());
      } catch (const DegenerateInput&) {
        r = 0.0;  // constant rows match nothing preferentially
      }
      abs_r(i, j) = std::abs(r);
    }
  }
  std::vector<int> perm(static_cast<std::size_t>(k), -1);
  std::vector<bool> est_used(static_cast<std::size_t>(k), false);
  std::vector<bool> tru_used(static_cast<std::size_t>(k), false);
  for (int step = 0; step < k; ++step) {
    int best_i = -1, best_j = -1;
    double best = -1.0;
    for (int i = 0; i < k; ++i) {
      if (est_used[static_cast<std::size_t>(i)]) continue;
      for (int j = 0; j < k; ++j) {
        if (tru_used[static_cast<std::size_t>(j)]) continue;
        if (abs_r(i, j) > best) {
          best = abs_r(i, j);
          best_i = i;
          best_j = j;
        }
      }
    }
    perm[static_cast<std::size_t>(best_i)] = best_j;
    est_used[static_cast<std::size_t>(best_i)] = true;
    tru_used[static_cast<std::size_t>(best_j)] = true;
  }
  return perm;
}

ReliabilityReport icc_map(const std::vector<Matrix>& session1,
                          const std::vector<Matrix>& session2) {
  if (session1.size() != session2.size()) {
    throw InconsistentCohort("session subject counts disagree");
  }
  const std::size_t n = session1.size();
  if (n < 2) throw InconsistentCohort("need at least 2 subjects");
  const long l = session1[0].rows();
  const long v = session1[0].cols();
  for (std::size_t i = 0; i < n; ++i) {
    if (session1[i].rows() != l || session1[i].cols() != v ||
        session2[i].rows() != l || session2[i].cols() != v) {
      throw InconsistentCohort("subject map shapes disagree");
    }
  }
  const double dn = static_cast<double>(n);
  Matrix m1 = Matrix::Zero(l, v), m2 = Matrix::Zero(l, v);
  Matrix md = Matrix::Zero(l, v);
  for (std::size_t i = 0; i < n; ++i) {
    m1 += session1[i];
    m2 += session2[i];
    md += session2[i] - session1[i];
  }
  m1 /= dn;
  m2 /= dn;
  md /= dn;
  Matrix ss1 = Matrix::Zero(l, v), ss2 = Matrix::Zero(l, v);
  Matrix ssd = Matrix::Zero(l, v);
  for (std::size_t i = 0; i < n; ++i) {
    ss1 += (session1[i] - m1).array().square().matrix();
    ss2 += (session2[i] - m2).array().square().matrix();
    ssd += (session2[i] - session1[i] - md).array().square().matrix();
  }
  const double inv = 1.0 / (dn - 1.0);
  ReliabilityReport rep;
  rep.var_within = 0.5 * inv * ssd;
  rep.var_total = 0.5 * inv * (ss1 + ss2);
  rep.var_between = (rep.var_total - rep.var_within).cwiseMax(0.0);
  rep.icc = Matrix::Zero(l, v);
  for (long q = 0; q < l; ++q) {
    for (long j = 0; j < v; ++j) {
      const double tot = rep.var_total(q, j);
      rep.icc(q, j) = tot > 0.0 ? rep.var_between(q, j) / tot : 0.0;
    }
  }
  return rep;
}

Vector wi2c2(const ReliabilityReport& report, const Matrix& template_mean) {
  const long l = report.var_total.rows();
  const long v = report.var_total.cols();
  if (template_mean.rows() != l || template_mean.cols() != v) {
    throw DimensionMismatch("template mean shape disagrees with report");
  }
  Vector out(l);
  for (long q = 0; q < l; ++q) {
    const Vector lambda = template_mean.row(q).cwiseAbs().transpose();
    const double mass = lambda.sum();
    if (!(mass > 0.0)) throw DegenerateInput("all-zero template mean row");
    const double num = lambda.dot(report.var_between.row(q).transpose()) / mass;
    const double den = lambda.dot(report.var_total.row(q).transpose()) / mass;
    out(q) = den > 0.0 ? num / den : 0.0;
  }
  return out;
}

}  // namespace tica
