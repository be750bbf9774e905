#include <algorithm>
#include <vector>

#include "em_internal.hpp"

namespace tica {

Matrix update_mixing(const Matrix& suff_ys, const Matrix& suff_ss,
                     bool orthogonalize) {
  if (suff_ss.rows() != suff_ss.cols() || suff_ys.cols() != suff_ss.rows())
    throw DimensionMismatch("update_mixing: incompatible accumulator shapes");
  Eigen::SelfAdjointEigenSolver<Matrix> es(suff_ss);
  if (es.info() != Eigen::Success)
    throw NumericalError("update_mixing: eigendecomposition failed");
  const double emax = es.eigenvalues().maxCoeff();
  if (!(emax > 0.0) || es.eigenvalues().minCoeff() <= 1e-12 * emax)
    throw NumericalError("update_mixing: singular source scatter");
  // raw = suff_ys suff_ss^-1, via the symmetric solve of suff_ss X = suff_ys'
  const Matrix raw = suff_ss.ldlt().solve(suff_ys.transpose()).transpose();
  if (!orthogonalize) return raw;
  return detail::orthonormalize(raw);
}

double update_noise_var(double suff_yy, const Matrix& suff_ys,
                        const Matrix& suff_ss, const Matrix& a_new,
                        const Vector& c_diag, long v, int dim) {
  if (a_new.rows() != suff_ys.rows() || a_new.cols() != suff_ys.cols())
    throw DimensionMismatch("update_noise_var: mixing/accumulator mismatch");
  if (c_diag.size() != a_new.rows())
    throw DimensionMismatch("update_noise_var: noise shape mismatch");
  const Vector c_inv = c_diag.cwiseInverse();
  const Matrix cia = c_inv.asDiagonal() * a_new;
  const double cross = (cia.array() * suff_ys.array()).sum();
  const double quad =
      ((a_new.transpose() * cia).array() * suff_ss.array()).sum();
  const double raw =
      (suff_yy - 2.0 * cross + quad) / (static_cast<double>(v) * dim);
  return std::max(raw, 1e-10);
}

std::vector<MoGParams> update_mog(const Matrix& z_marg_sum,
                                  const Matrix& cond_first_sum,
                                  const Matrix& cond_second_sum, long v,
                                  const std::vector<MoGParams>& previous) {
  const Eigen::Index q_prime = z_marg_sum.rows();
  const Eigen::Index m = z_marg_sum.cols();
  if (cond_first_sum.rows() != q_prime || cond_first_sum.cols() != m ||
      cond_second_sum.rows() != q_prime || cond_second_sum.cols() != m)
    throw DimensionMismatch("update_mog: accumulator shape mismatch");
  if (static_cast<Eigen::Index>(previous.size()) != q_prime)
    throw DimensionMismatch("update_mog: previous params count mismatch");
  std::vector<MoGParams> out(previous.begin(), previous.end());
  for (Eigen::Index q = 0; q < q_prime; ++q) {
    MoGParams& p = out[static_cast<std::size_t>(q)];
    for (Eigen::Index c = 0; c < m; ++c) {
      const double mass = z_marg_sum(q, c);
      p.weights(c) = mass / static_cast<double>(v);
      if (mass < 1e-12) continue;  // dead component keeps location and scale
      const double mu = cond_first_sum(q, c) / mass;
      const double var = cond_second_sum(q, c) / mass - mu * mu;
      p.means(c) = mu;
      p.vars(c) = std::max(var, p.var_floor);
    }
  }
  return out;
}

}  // namespace tica
