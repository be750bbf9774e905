#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "tica/common.hpp"
#include "tica/rng.hpp"

namespace tica::test {

inline Matrix random_matrix(long rows, long cols, std::uint64_t seed,
                            double sd = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < cols; ++j) m(i, j) = sd * rng.normal();
  }
  return m;
}

// Subtracts column means then row means.
inline Matrix double_center(const Matrix& x) {
  Matrix out = x;
  out.rowwise() -= out.colwise().mean();
  out.colwise() -= out.rowwise().mean();
  return out;
}

// Unique scratch directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("tica_test_" + tag + "_" + std::to_string(counter_++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::filesystem::path path() const { return path_; }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

}  // namespace tica::test
