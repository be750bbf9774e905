#pragma once

#include "tica/common.hpp"

namespace tica {

struct DualRegResult {
  Matrix mixing;   // T x L
  Matrix sources;  // L x V
};

// Two-stage least squares against group maps: first the mixing matrix
// (x' regressed on s_grp'), then subject maps (x regressed on the fitted
// mixing). Both stages are plain OLS solved via Householder QR. Throws
// RankDeficient when a stage's Gram matrix is singular beyond 1e-12
// relative.
DualRegResult dual_regress(const Matrix& x, const Matrix& s_grp);

}  // namespace tica
