#pragma once

#include "neat/common.hpp"
#include "neat/rng.hpp"

#include <filesystem>
#include <string>

namespace neat::testing {

inline RowMatrixXd random_matrix(CounterRng& rng, Index rows, Index cols) {
  RowMatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  }
  return m;
}

inline VectorXd random_unit(CounterRng& rng, Index dim) {
  VectorXd v(dim);
  for (Index i = 0; i < dim; ++i) v[i] = rng.normal();
  return v.normalized();
}

inline RowMatrixXd unit_rows(RowMatrixXd m) {
  m.rowwise().normalize();
  return m;
}

/// max |a - b| / max(|a|, |b|, floor), the yardstick for finite-difference checks.
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("neat_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace neat::testing
