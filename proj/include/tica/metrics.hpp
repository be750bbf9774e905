#pragma once

#include <vector>

#include "tica/common.hpp"

namespace tica {

// Pearson correlation of two equal-length vectors. DegenerateInput when
// either is constant or shorter than 2.
double pearson(const Vector& a, const Vector& b);

// mask(v) = truth(v) != 0 exactly.
std::vector<bool> activation_mask(const Vector& truth);

// Pearson correlation restricted to masked entries. Requires at least 3
// masked entries and nonconstant truth on the mask.
double corr_activated(const Vector& estimate, const Vector& truth,
                      const std::vector<bool>& mask);

// Elementwise mean over subjects of squared error, after fitting one
// least-squares scale factor per (subject, component) pair. An all-zero
// estimate row keeps scale 0.
Matrix mse_map(const std::vector<Matrix>& estimates,
               const std::vector<Matrix>& truth);

// Greedy matching: repeatedly pair the unmatched (estimate, truth) rows
// with largest |correlation|; ties resolve to the smallest estimate index,
// then smallest truth index. perm[estimate index] = truth index. Estimate
// rows are sign-fixed first.
std::vector<int> match_components(const Matrix& estimates,
                                  const Matrix& truth);

struct ReliabilityReport {
  Matrix icc;          // L x V, in [0,1]
  Vector wi2c2;        // per component, filled by the weighting step
  Matrix var_between;  // L x V
  Matrix var_within;   // L x V
  Matrix var_total;    // L x V
};

// Two-session variance decomposition per voxel:
// var_within = Var_i{W2 - W1} / 2, var_total = (Var_i{W1} + Var_i{W2}) / 2,
// var_between = max(var_total - var_within, 0),
// icc = var_between / var_total with 0/0 -> 0.
ReliabilityReport icc_map(const std::vector<Matrix>& session1,
                          const std::vector<Matrix>& session2);

// Weighted image ICC per component: ratio of weighted sums of between and
// total variance, weights proportional to |template_mean| and normalized to
// sum 1 per row.
Vector wi2c2(const ReliabilityReport& report, const Matrix& template_mean);

}  // namespace tica
