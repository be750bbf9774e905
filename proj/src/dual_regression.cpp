#include "tica/dual_regression.hpp"

namespace tica {

namespace {

// Least-squares solve of design * coef = rhs for tall designs, with an
// explicit rank check on the design's Gram matrix.
Matrix solve_ols(const Matrix& design, const Matrix& rhs, const char* stage) {
  Matrix gram(design.cols(), design.cols());
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram.selfadjointView<Eigen::Lower>());
  if (es.info() != Eigen::Success)
    throw NumericalError("dual_regress: Gram eigendecomposition failed");
  const double lam_max = es.eigenvalues().maxCoeff();
  if (!(lam_max > 0.0) || es.eigenvalues().minCoeff() <= 1e-12 * lam_max)
    throw RankDeficient(std::string("dual_regress: singular design in ") + stage);
  return design.householderQr().solve(rhs);
}

}  // namespace

DualRegResult dual_regress(const Matrix& x, const Matrix& s_grp) {
  if (x.cols() != s_grp.cols())
    throw DimensionMismatch("dual_regress: x and s_grp disagree on V");
  if (s_grp.rows() < 1 || x.rows() < s_grp.rows())
    throw DegenerateInput("dual_regress: need T >= L >= 1");

  DualRegResult out;
  // Stage 1: x' = s_grp' * mixing', one column of x' per time point.
  out.mixing = solve_ols(s_grp.transpose(), x.transpose(), "stage 1").transpose();
  // Stage 2: x = mixing * sources.
  out.sources = solve_ols(out.mixing, x, "stage 2");
  return out;
}

}  // namespace tica
