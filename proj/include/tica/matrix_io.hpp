#pragma once

#include <string>

#include "tica/common.hpp"

namespace tica::io {

// Binary matrix container: magic "TICA", version byte (1), three reserved
// zero bytes, then u64 rows, u64 cols and rows*cols f64 values in row-major
// order, all little-endian.
void write_matrix_bin(const std::string& path, const Matrix& m);
Matrix read_matrix_bin(const std::string& path);

// Plain CSV, one matrix row per line. Values round-trip through text at
// full double precision.
void write_matrix_csv(const std::string& path, const Matrix& m);
Matrix read_matrix_csv(const std::string& path);

// Dispatch on extension: ".bin" or ".csv".
void write_matrix(const std::string& path, const Matrix& m);
Matrix read_matrix(const std::string& path);

}  // namespace tica::io
