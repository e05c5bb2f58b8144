#pragma once

// Two-component 1-D Gaussian mixture fitted by EM.

#include "neat/common.hpp"

#include <array>
#include <span>

namespace neat::gmm {

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kTolerance = 1e-6;
inline constexpr int kMaxIterations = 100;
inline constexpr double kMinWeight = 0.02;
inline constexpr double kMinMeanGap = 1e-3;

/// Components ordered by mean ascending: index 0 is the low (noisy) component.
struct Params {
  std::array<double, 2> weight{0.5, 0.5};
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> variance{1.0, 1.0};
  bool degenerate = false;
};

struct Fit {
  Params params;
  std::vector<double> log_likelihood;  // after initialization, then after every EM step
  int iterations = 0;
};

/// Quantile-initialised EM (means at the 25th/75th percentiles, pooled variance, equal
/// weights), stopped when the log-likelihood gain drops below kTolerance or after
/// kMaxIterations. Throws InsufficientDataError for fewer than 4 points.
Fit fit(std::span<const double> values);

double log_likelihood(const Params& params, std::span<const double> values);

/// (p_low, p_high). Throws ContractViolation on degenerate params.
std::array<double, 2> posterior(const Params& params, double value);

}  // namespace neat::gmm
