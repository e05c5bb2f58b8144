#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace neat {

template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXd = RowMatrixX<double>;
using RowMatrixXf = RowMatrixX<float>;
using Eigen::Index;
using Eigen::VectorXd;
using Eigen::VectorXi;

using Mask = std::vector<std::uint8_t>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File system or format failure (CLI exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values in training or detection (CLI exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Broken precondition inside the library; indicates a caller bug.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Number of worker threads: NEAT_THREADS if set and positive, otherwise hardware concurrency.
unsigned worker_threads();

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker, so
/// results are independent of scheduling as long as body writes only slot i.
void parallel_for(Index n, const std::function<void(Index)>& body);

/// Shortest round-trip decimal form, '.' separator regardless of locale.
std::string format_number(double value);

/// L2-normalizes v in place; a zero vector becomes the uniform vector 1/sqrt(n).
template <typename Derived>
void normalize_or_uniform(Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar norm = v.norm();
  if (norm > Scalar(0)) {
    v /= norm;
  } else if (v.size() > 0) {
    v.setConstant(Scalar(1) / std::sqrt(static_cast<Scalar>(v.size())));
  }
}

template <typename Derived>
void normalize_or_uniform(Eigen::MatrixBase<Derived>&& v) {
  normalize_or_uniform(v);
}

}  // namespace neat
