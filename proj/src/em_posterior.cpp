#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <vector>

#include "em_internal.hpp"
#include "tica/parallel.hpp"

namespace tica {

namespace detail {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

}  // namespace

bool solve_spd(const Matrix& sym, const Matrix& rhs, Matrix* out) {
  Eigen::LDLT<Matrix> ldlt(sym);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    *out = ldlt.solve(rhs);
    return true;
  }
  const double jitter = 1e-10 * sym.diagonal().cwiseAbs().mean();
  Matrix bumped = sym;
  bumped.diagonal().array() += jitter;
  Eigen::LDLT<Matrix> retry(bumped);
  if (retry.info() == Eigen::Success && retry.isPositive()) {
    *out = retry.solve(rhs);
    return true;
  }
  return false;
}

Matrix orthonormalize(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues().maxCoeff();
  if (!(smax > 0.0) || svd.singularValues().minCoeff() <= 1e-12 * smax)
    throw NumericalError("orthogonalization given a rank-deficient matrix");
  return svd.matrixU() * svd.matrixV().transpose();
}

EmTables make_tables(const ThetaState& theta, const Vector& c_diag,
                     const LatentSpace& space) {
  const Eigen::Index q = theta.a1.rows();
  const Eigen::Index l = theta.a1.cols();
  const Eigen::Index qp = theta.a2.cols();
  if (theta.a2.size() > 0 && theta.a2.rows() != q)
    throw DimensionMismatch("theta: a1 and a2 disagree on rows");
  if (c_diag.size() != q)
    throw DimensionMismatch("theta: c_diag length must equal order");
  if (!(theta.nu0_sq > 0.0))
    throw DegenerateInput("theta: nu0_sq must be positive");

  EmTables t;
  t.a.resize(q, l + qp);
  t.a.leftCols(l) = theta.a1;
  if (qp > 0) t.a.rightCols(qp) = theta.a2;
  t.c_inv = c_diag.cwiseInverse();
  t.noise_diag = theta.nu0_sq * c_diag;
  t.g = (1.0 / theta.nu0_sq) *
        (t.a.transpose() * t.c_inv.asDiagonal());
  t.p_prior = t.g * t.a;

  const std::size_t n_cfg = space.configs.empty() ? 1 : space.configs.size();
  t.mu_z.resize(n_cfg);
  t.dz.resize(n_cfg);
  t.log_prior.assign(n_cfg, 0.0);
  if (qp == 0) {
    t.mu_z[0] = Vector();
    t.dz[0] = Vector();
    return t;
  }
  if (static_cast<int>(theta.mog.size()) != qp)
    throw DimensionMismatch("theta: one MoG per nuisance component required");
  for (std::size_t c = 0; c < space.configs.size(); ++c) {
    const auto& z = space.configs[c];
    if (static_cast<Eigen::Index>(z.size()) != qp)
      throw DimensionMismatch("space: config length must equal Q'");
    Vector mu(qp), d(qp);
    double lp = 0.0;
    for (Eigen::Index k = 0; k < qp; ++k) {
      const MoGParams& mog = theta.mog[static_cast<std::size_t>(k)];
      const int label = z[static_cast<std::size_t>(k)];
      if (label >= mog.m)
        throw DimensionMismatch("space: config label outside MoG range");
      mu(k) = mog.means(label);
      d(k) = mog.vars(label);
      const double w = mog.weights(label);
      lp += w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
    }
    t.mu_z[c] = mu;
    t.dz[c] = d;
    t.log_prior[c] = lp;
  }
  return t;
}

PosteriorMoments location_moments(const Vector& y_v, const Vector& s0_v,
                                  const Vector& var_v,
                                  const LatentSpace& space,
                                  const EmTables& tables, Vector* probs_out) {
  const Eigen::Index q = tables.a.rows();
  const Eigen::Index k = tables.a.cols();
  const Eigen::Index l = s0_v.size();
  const Eigen::Index qp = k - l;
  const std::size_t n_cfg = qp == 0 ? 1 : space.configs.size();

  const Vector gy = tables.g * y_v;          // (1/nu0_sq) A'C^-1 y
  const Vector var_inv = var_v.cwiseInverse();
  const Vector prior_rhs_1 = var_inv.cwiseProduct(s0_v);
  const Matrix a1_sv_a1 = tables.a.leftCols(l) * var_v.asDiagonal() *
                          tables.a.leftCols(l).transpose();

  PosteriorMoments out;
  out.first = Vector::Zero(k);
  out.second = Matrix::Zero(k, k);
  out.z_marg = Matrix::Zero(qp, qp > 0 ? space.m : 0);
  out.cond_first = Matrix::Zero(qp, qp > 0 ? space.m : 0);
  out.cond_second = Matrix::Zero(qp, qp > 0 ? space.m : 0);

  // Pass 1: per-config conditional posterior and log weight.
  std::vector<Vector> means(n_cfg);
  std::vector<Matrix> covs(n_cfg);
  Vector log_w(static_cast<Eigen::Index>(n_cfg));
  double max_lw = -std::numeric_limits<double>::infinity();
  Matrix precision(k, k), cov(k, k);
  for (std::size_t c = 0; c < n_cfg; ++c) {
    if (qp > 0 && !std::isfinite(tables.log_prior[c])) {
      log_w(static_cast<Eigen::Index>(c)) =
          -std::numeric_limits<double>::infinity();
      means[c] = Vector::Zero(k);
      covs[c] = Matrix::Zero(k, k);
      continue;
    }
    precision = tables.p_prior;
    precision.topLeftCorner(l, l).diagonal() += var_inv;
    Vector rhs = gy;
    rhs.head(l) += prior_rhs_1;
    if (qp > 0) {
      const Vector dz_inv = tables.dz[c].cwiseInverse();
      precision.bottomRightCorner(qp, qp).diagonal() += dz_inv;
      rhs.tail(qp) += dz_inv.cwiseProduct(tables.mu_z[c]);
    }
    if (!solve_spd(precision, Matrix::Identity(k, k), &cov))
      throw NumericalError("posterior: conditional precision not SPD");
    means[c] = cov * rhs;
    covs[c] = cov;

    // Marginal likelihood of y under this config.
    Matrix sigma_y = a1_sv_a1;
    sigma_y.diagonal() += tables.noise_diag;
    if (qp > 0) {
      const auto a2 = tables.a.rightCols(qp);
      sigma_y += a2 * tables.dz[c].asDiagonal() * a2.transpose();
    }
    Eigen::LLT<Matrix> llt(sigma_y);
    if (llt.info() != Eigen::Success) {
      sigma_y.diagonal().array() += 1e-10 * sigma_y.diagonal().mean();
      llt.compute(sigma_y);
      if (llt.info() != Eigen::Success)
        throw NumericalError("posterior: marginal covariance not SPD");
    }
    Vector mean_y = tables.a.leftCols(l) * s0_v;
    if (qp > 0) mean_y += tables.a.rightCols(qp) * tables.mu_z[c];
    const Vector white = llt.matrixL().solve(y_v - mean_y);
    const double log_det =
        llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double log_g = -0.5 * (static_cast<double>(q) * kLogTwoPi +
                                 white.squaredNorm()) -
                         log_det;
    const double lw = (qp > 0 ? tables.log_prior[c] : 0.0) + log_g;
    log_w(static_cast<Eigen::Index>(c)) = lw;
    max_lw = std::max(max_lw, lw);
  }

  if (!std::isfinite(max_lw))
    throw NumericalError("posterior: zero evidence at location");

  double norm = 0.0;
  for (std::size_t c = 0; c < n_cfg; ++c)
    norm += std::exp(log_w(static_cast<Eigen::Index>(c)) - max_lw);
  out.log_evidence = max_lw + std::log(norm);
  if (probs_out != nullptr)
    probs_out->resize(static_cast<Eigen::Index>(n_cfg));

  // Pass 2: mixture-averaged moments and MoG sufficient statistics.
  for (std::size_t c = 0; c < n_cfg; ++c) {
    const double p =
        std::exp(log_w(static_cast<Eigen::Index>(c)) - out.log_evidence);
    if (probs_out != nullptr) (*probs_out)(static_cast<Eigen::Index>(c)) = p;
    if (p == 0.0) continue;
    out.first += p * means[c];
    out.second += p * (covs[c] + means[c] * means[c].transpose());
    if (qp > 0) {
      const auto& z = space.configs[c];
      for (Eigen::Index kq = 0; kq < qp; ++kq) {
        const int label = z[static_cast<std::size_t>(kq)];
        const double mu = means[c](l + kq);
        const double second = covs[c](l + kq, l + kq) + mu * mu;
        out.z_marg(kq, label) += p;
        out.cond_first(kq, label) += p * mu;
        out.cond_second(kq, label) += p * second;
      }
    }
  }
  // Normalize the conditional moments into E[. | z_q = m, y].
  for (Eigen::Index kq = 0; kq < qp; ++kq)
    for (int m = 0; m < space.m; ++m) {
      const double pm = out.z_marg(kq, m);
      if (pm > 0.0) {
        out.cond_first(kq, m) /= pm;
        out.cond_second(kq, m) /= pm;
      }
    }
  return out;
}

}  // namespace detail

CondPosterior cond_posterior_s(const Vector& y_v,
                               const std::vector<std::uint8_t>& z,
                               const ThetaState& theta, const Vector& s0_v,
                               const Vector& var_v, const Vector& c_diag) {
  const Eigen::Index l = theta.a1.cols();
  const Eigen::Index qp = theta.a2.cols();
  if (s0_v.size() != l || var_v.size() != l)
    throw DimensionMismatch("cond_posterior_s: template slice length != L");
  if (static_cast<Eigen::Index>(z.size()) != qp)
    throw DimensionMismatch("cond_posterior_s: config length != Q'");
  if (!(var_v.minCoeff() > 0.0))
    throw DegenerateInput("cond_posterior_s: template variance must be floored");

  LatentSpace space;
  space.q_prime = static_cast<int>(qp);
  space.m = 0;
  for (std::uint8_t label : z) space.m = std::max(space.m, label + 1);
  for (const auto& mog : theta.mog) space.m = std::max(space.m, mog.m);
  if (qp > 0) space.configs.push_back(z);

  const detail::EmTables tables = detail::make_tables(theta, c_diag, space);
  const Eigen::Index k = l + qp;
  Matrix precision = tables.p_prior;
  const Vector var_inv = var_v.cwiseInverse();
  precision.topLeftCorner(l, l).diagonal() += var_inv;
  Vector rhs = tables.g * y_v;
  rhs.head(l) += var_inv.cwiseProduct(s0_v);
  if (qp > 0) {
    const Vector dz_inv = tables.dz[0].cwiseInverse();
    precision.bottomRightCorner(qp, qp).diagonal() += dz_inv;
    rhs.tail(qp) += dz_inv.cwiseProduct(tables.mu_z[0]);
  }
  CondPosterior out;
  Matrix cov;
  if (!detail::solve_spd(precision, Matrix::Identity(k, k), &cov))
    throw NumericalError("cond_posterior_s: precision not SPD");
  out.cov = cov;
  out.mean = cov * rhs;
  return out;
}

ZPosterior posterior_z(const Vector& y_v, const ThetaState& theta,
                       const Vector& s0_v, const Vector& var_v,
                       const Vector& c_diag, const LatentSpace& space) {
  const detail::EmTables tables = detail::make_tables(theta, c_diag, space);
  ZPosterior out;
  const PosteriorMoments moments =
      detail::location_moments(y_v, s0_v, var_v, space, tables, &out.probs);
  out.log_evidence = moments.log_evidence;
  return out;
}

PosteriorMoments posterior_moments(const Vector& y_v, const ThetaState& theta,
                                   const Vector& s0_v, const Vector& var_v,
                                   const Vector& c_diag,
                                   const LatentSpace& space) {
  const detail::EmTables tables = detail::make_tables(theta, c_diag, space);
  return detail::location_moments(y_v, s0_v, var_v, space, tables);
}

double observed_loglik(const Matrix& y, const ThetaState& theta,
                       const Matrix& tpl_mean, const Matrix& tpl_var_floored,
                       const Vector& c_diag, const LatentSpace& space,
                       int threads) {
  const Eigen::Index v = y.cols();
  if (tpl_mean.cols() != v)
    throw DimensionMismatch("observed_loglik: template and data disagree on V");
  const detail::EmTables tables = detail::make_tables(theta, c_diag, space);
  std::vector<double> contrib(static_cast<std::size_t>(v), 0.0);
  std::mutex fail_mutex;
  std::exception_ptr failure;
  parallel_for(v, threads, [&](long begin, long end) {
    try {
      for (long loc = begin; loc < end; ++loc) {
        const PosteriorMoments m = detail::location_moments(
            y.col(loc), tpl_mean.col(loc), tpl_var_floored.col(loc), space,
            tables);
        contrib[static_cast<std::size_t>(loc)] = m.log_evidence;
      }
    } catch (...) {
      const std::lock_guard<std::mutex> lock(fail_mutex);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  double total = 0.0;
  for (double c : contrib) total += c;
  return total;
}

}  // namespace tica
