#pragma once

#include <cstdint>

#include "tica/common.hpp"

namespace tica {

struct IcaResult {
  Matrix mixing;           // Q x q_out
  Matrix sources;          // q_out x V, unit variance, skew-positive
  Vector cluster_quality;  // per source; 1.0 when produced by a single run
  bool converged = false;
  int n_epochs = 0;
};

// Flips every row whose sample skewness is negative. Zero skewness is left
// alone.
Matrix fix_signs(const Matrix& sources);

// Natural-gradient blind source separation with a logistic nonlinearity on
// the top q_out principal directions of y. The learning rate starts at 0.01
// and halves whenever the data log likelihood drops (the step is retaken).
// Stops when the relative weight change falls below 1e-6, or flags
// non-convergence after 500 epochs.
IcaResult infomax_single(const Matrix& y, int q_out, std::uint64_t seed);

// n_runs independent runs from derived seeds; the n_runs * q_out resulting
// maps are clustered (average link on 1 - |correlation|) into q_out groups
// whose sign-aligned means become the final sources, ordered by descending
// mean within-cluster |correlation|.
IcaResult infomax_restarts(const Matrix& y, int q_out, int n_runs,
                           std::uint64_t seed);

}  // namespace tica
