#pragma once

#include "tica/common.hpp"

namespace tica {

// Eigendecomposition of the T x T matrix (1/V) x x'. Eigenvalues are sorted
// non-increasing; eigenvector columns are orthonormal and aligned with the
// eigenvalue order.
struct EigenSpectrum {
  Vector eigenvalues;   // length T
  Matrix eigenvectors;  // T x T
};

EigenSpectrum eigen_spectrum(const Matrix& x);

struct OrderEstimate {
  int order = 0;
  bool low_rank_warning = false;
  Vector log_evidence;  // per candidate order 1..T-2
};

// Laplace-approximation model evidence over candidate orders 1..T-2, given
// the spectrum of a T-variate sample covariance estimated from n_obs
// observations. Candidates whose retained eigenvalues reach the noise floor
// (ties included) get -inf evidence. If no candidate beats order 1, the
// estimate is 1 with low_rank_warning set.
OrderEstimate estimate_order(const Vector& eigenvalues, long n_obs);

// Mean of the eigenvalues after position q (1-based count of retained).
double residual_variance(const Vector& eigenvalues, int q);

struct ReducedData {
  Matrix y;        // Q x V, reduced data
  Matrix h;        // Q x T, reduction operator
  Vector c_diag;   // diagonal of H H' = (D1 - sigma2 I)^-1
  double sigma2 = 0.0;
  int order = 0;
  bool low_rank_warning = false;
};

// Projects doubly-centered data onto its top q principal directions with
// noise-adjusted scaling: h = (D1 - sigma2 I)^-1/2 U1'. Pass q = 0 to select
// the order automatically. Requires eigenvalue q to exceed the residual
// variance of the tail.
ReducedData prewhiten(const Matrix& data, int q = 0);

}  // namespace tica
