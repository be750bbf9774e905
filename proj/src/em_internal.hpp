#pragma once

#include <vector>

#include "tica/em.hpp"

namespace tica::detail {

// Theta- and space-dependent quantities reused across every location in one
// E-step.
struct EmTables {
  Matrix a;        // [a1 a2], Q x K
  Matrix g;        // (1/nu0) A' C^-1, K x Q
  Matrix p_prior;  // (1/nu0) A' C^-1 A, K x K
  Vector c_inv;    // 1 / c_diag
  Vector noise_diag;  // nu0_sq * c_diag
  // Per config:
  std::vector<Vector> mu_z;   // Q'
  std::vector<Vector> dz;     // Q'
  std::vector<double> log_prior;
};

EmTables make_tables(const ThetaState& theta, const Vector& c_diag,
                     const LatentSpace& space);

// Solves sym * x = rhs with LDLT and one jittered retry; returns false if
// both attempts fail.
bool solve_spd(const Matrix& sym, const Matrix& rhs, Matrix* out);

// Nearest matrix with orthonormal columns (SVD U V').
Matrix orthonormalize(const Matrix& m);

// Per-location posterior moments; when probs_out is non-null it receives
// the normalized per-config probabilities (aligned with space.configs).
PosteriorMoments location_moments(const Vector& y_v, const Vector& s0_v,
                                  const Vector& var_v,
                                  const LatentSpace& space,
                                  const EmTables& tables,
                                  Vector* probs_out = nullptr);

}  // namespace tica::detail
