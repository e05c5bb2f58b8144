#include "neat/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace neat::gmm {

namespace {

double log_normal(double x, double mean, double variance) {
  const double diff = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + diff * diff / variance);
}

// log(w_k N(x; mu_k, var_k)) for both components.
std::array<double, 2> log_joint(const Params& p, double x) {
  std::array<double, 2> out;
  for (int k = 0; k < 2; ++k) {
    out[k] = p.weight[k] > 0.0 ? std::log(p.weight[k]) + log_normal(x, p.mean[k], p.variance[k])
                               : -std::numeric_limits<double>::infinity();
  }
  return out;
}

double log_sum(const std::array<double, 2>& v) {
  const double hi = std::max(v[0], v[1]);
  if (!std::isfinite(hi)) return hi;
  return hi + std::log(std::exp(v[0] - hi) + std::exp(v[1] - hi));
}

double quantile(std::vector<double> sorted_copy, double q) {
  std::sort(sorted_copy.begin(), sorted_copy.end());
  const double pos = q * static_cast<double>(sorted_copy.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted_copy.size() - 1);
  return sorted_copy[lo] + (pos - static_cast<double>(lo)) * (sorted_copy[hi] - sorted_copy[lo]);
}

}  // namespace

double log_likelihood(const Params& params, std::span<const double> values) {
  double total = 0.0;
  for (double x : values) total += log_sum(log_joint(params, x));
  return total;
}

Fit fit(std::span<const double> values) {
  if (values.size() < 4) throw InsufficientDataError("GMM fit needs at least 4 points");
  const auto n = static_cast<double>(values.size());

  std::vector<double> copy(values.begin(), values.end());
  double mean = 0.0;
  for (double x : values) mean += x;
  mean /= n;
  double variance = 0.0;
  for (double x : values) variance += (x - mean) * (x - mean);
  variance = std::max(variance / n, kVarianceFloor);

  Fit result;
  Params& p = result.params;
  p.mean = {quantile(copy, 0.25), quantile(copy, 0.75)};
  p.variance = {variance, variance};
  p.weight = {0.5, 0.5};

  std::vector<double> resp_low(values.size());
  double previous = log_likelihood(p, values);
  result.log_likelihood.push_back(previous);

  for (int it = 0; it < kMaxIterations; ++it) {
    // E-step
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto joint = log_joint(p, values[i]);
      resp_low[i] = std::exp(joint[0] - log_sum(joint));
    }
    // M-step
    std::array<double, 2> mass{0.0, 0.0};
    std::array<double, 2> sum{0.0, 0.0};
    for (std::size_t i = 0; i < values.size(); ++i) {
      mass[0] += resp_low[i];
      mass[1] += 1.0 - resp_low[i];
      sum[0] += resp_low[i] * values[i];
      sum[1] += (1.0 - resp_low[i]) * values[i];
    }
    for (int k = 0; k < 2; ++k) {
      p.weight[k] = mass[k] / n;
      if (mass[k] <= std::numeric_limits<double>::min()) continue;  // empty component keeps its shape
      p.mean[k] = sum[k] / mass[k];
    }
    std::array<double, 2> sq{0.0, 0.0};
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double d0 = values[i] - p.mean[0];
      const double d1 = values[i] - p.mean[1];
      sq[0] += resp_low[i] * d0 * d0;
      sq[1] += (1.0 - resp_low[i]) * d1 * d1;
    }
    for (int k = 0; k < 2; ++k) {
      if (mass[k] <= std::numeric_limits<double>::min()) continue;
      p.variance[k] = std::max(sq[k] / mass[k], kVarianceFloor);
    }
    ++result.iterations;
    const double current = log_likelihood(p, values);
    result.log_likelihood.push_back(current);
    const bool converged = current - previous < kTolerance;
    previous = current;
    if (converged) break;
  }

  if (p.mean[0] > p.mean[1]) {
    std::swap(p.mean[0], p.mean[1]);
    std::swap(p.variance[0], p.variance[1]);
    std::swap(p.weight[0], p.weight[1]);
  }
  p.degenerate = std::abs(p.mean[1] - p.mean[0]) < kMinMeanGap || std::min(p.weight[0], p.weight[1]) < kMinWeight;
  return result;
}

std::array<double, 2> posterior(const Params& params, double value) {
  if (params.degenerate) throw ContractViolation("posterior of a degenerate mixture");
  const auto joint = log_joint(params, value);
  const double total = log_sum(joint);
  const double low = std::exp(joint[0] - total);
  return {low, 1.0 - low};
}

}  // namespace neat::gmm
