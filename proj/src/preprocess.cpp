#include "tica/preprocess.hpp"

#include <cmath>

namespace tica {

ScaledData center_scale(const Matrix& x, Scaling scaling) {
  const Eigen::Index t = x.rows();
  const Eigen::Index v = x.cols();
  if (t < 2 || v < 1) throw DegenerateInput("center_scale: need at least 2 rows");

  // Scale comes from the raw input, before any centering.
  double scale = 0.0;
  if (scaling == Scaling::temporal_sd) {
    const Eigen::RowVectorXd col_means = x.colwise().mean();
    double acc = 0.0;
    for (Eigen::Index c = 0; c < v; ++c) {
      const double ss = (x.col(c).array() - col_means(c)).square().sum();
      acc += std::sqrt(ss / static_cast<double>(t - 1));
    }
    scale = acc / static_cast<double>(v);
  } else {
    const double mean = x.mean();
    const double ss = (x.array() - mean).square().sum();
    scale = std::sqrt(ss / static_cast<double>(t * v - 1));
  }
  if (!(scale > 0.0))
    throw DegenerateInput("center_scale: zero variance input");

  ScaledData out;
  out.scale_factor = scale;
  out.data = x;
  out.data.rowwise() -= x.colwise().mean();          // per-location temporal mean
  out.data.colwise() -= out.data.rowwise().mean().eval();  // per-time spatial mean
  out.data /= scale;
  return out;
}

std::pair<Matrix, Matrix> split_sessions(const Matrix& x) {
  const Eigen::Index t = x.rows();
  if (t < 4) throw DegenerateInput("split_sessions: need at least 4 rows");
  const Eigen::Index half = t / 2;
  return {x.topRows(half), x.middleRows(half, half)};
}

}  // namespace tica
