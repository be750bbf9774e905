#pragma once

#include <utility>

#include "tica/common.hpp"

namespace tica {

// Rows of `data` are time points, columns are locations.
struct ScaledData {
  Matrix data;
  double scale_factor = 0.0;
};

enum class Scaling {
  temporal_sd,  // average per-location temporal SD (default)
  image_sd,     // SD pooled over all entries
};

// Centers each column (its temporal mean), then each row (its spatial
// mean), and divides by a scale computed from the raw input: the average
// temporal SD of the columns, or the pooled SD of all entries. Sample SDs
// use the n-1 denominator. After the call every row and column of `data`
// sums to ~0.
ScaledData center_scale(const Matrix& x, Scaling scaling = Scaling::temporal_sd);

// Splits rows into two pseudo-sessions: rows [0, floor(T/2)) and
// [floor(T/2), 2*floor(T/2)). An odd final row is dropped. Requires T >= 4.
std::pair<Matrix, Matrix> split_sessions(const Matrix& x);

}  // namespace tica
