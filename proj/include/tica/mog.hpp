#pragma once

#include <cstdint>

#include "tica/common.hpp"

namespace tica {

// Univariate Gaussian mixture. Weights sum to 1; variances never fall below
// var_floor; the component with the largest variance is stored last (it
// plays the activation role downstream).
struct MoGParams {
  int m = 0;
  Vector weights;
  Vector means;
  Vector vars;
  double var_floor = 0.0;
};

// EM fit with deterministic quantile-split initialization: samples are
// sorted and divided into m contiguous groups whose moments seed the
// components. The seed only breaks ties between degenerate groups.
// var_floor is 1e-6 times the sample variance.
MoGParams fit_mog(const Vector& samples, int m, std::uint64_t seed);

// Log density at x, evaluated with log-sum-exp.
double mog_logpdf(const MoGParams& params, double x);

// Total log likelihood of a sample vector.
double mog_loglik(const MoGParams& params, const Vector& samples);

// n independent draws; deterministic for a fixed seed.
Vector sample_mog(const MoGParams& params, long n, std::uint64_t seed);

}  // namespace tica
