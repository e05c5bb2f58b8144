#pragma once

// Channel Truncation: per-category channel scoring and selection, clean prototypes, the
// GMM-thresholded clean/noisy split, and the PCA projection baseline.

#include "neat/common.hpp"
#include "neat/features.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neat::trunc {

enum class ScoreMode { ave, var, img };
enum class CtMode { ct, ct_all, ct_oracle, ct_star, p_correction };
enum class Slice { top, middle, bottom };

std::string_view to_string(ScoreMode mode);
std::string_view to_string(CtMode mode);
std::string_view to_string(Slice slice);
ScoreMode parse_score_mode(std::string_view name);
CtMode parse_ct_mode(std::string_view name);
Slice parse_slice(std::string_view name);

inline constexpr double kOracleVarianceFloor = 1e-12;
inline constexpr double kDefaultThreshold = 0.5;

/// Instance-level channel score of a T x d frame block: temporal mean (ave), population
/// temporal variance (var), or the single frame itself (img, T must be 1).
template <typename Derived>
VectorXd instance_score(const Eigen::MatrixBase<Derived>& frames, ScoreMode mode) {
  const Index t = frames.rows();
  if (t == 0) throw InsufficientDataError("instance_score: no frames");
  switch (mode) {
    case ScoreMode::img:
      if (t != 1) throw ConfigError("img score mode requires a single frame");
      return frames.row(0).transpose().template cast<double>();
    case ScoreMode::ave:
      return frames.colwise().mean().transpose().template cast<double>();
    case ScoreMode::var: {
      const VectorXd mean = frames.colwise().mean().transpose().template cast<double>();
      const auto centered = frames.template cast<double>().rowwise() - mean.transpose();
      return centered.array().square().colwise().sum().transpose() / static_cast<double>(t);
    }
  }
  throw ContractViolation("unknown score mode");
}

/// Per-category reference instances (Omega^a), indexed by category.
using ReferenceSet = std::vector<std::vector<Index>>;

ReferenceSet full_reference(std::span<const int> labels, int num_categories);

/// First `per_category` truly-clean ids of every category (CT* anchors).
ReferenceSet anchor_reference(std::span<const int> labels, const Mask& true_clean, int num_categories,
                              int per_category = 10);

struct CategoryScore {
  int category = 0;
  VectorXi counts;            // histogram of top-b instance-score events
  std::vector<int> selected;  // b channels, count descending then index ascending
};

/// All channel indices ordered by (score descending, index ascending).
std::vector<int> rank_channels(const VectorXd& score);

/// Top-b channels of a score vector under the same ordering.
std::vector<int> top_channels(const VectorXd& score, int b);

/// Histogram of each reference instance's top-b channels; `slice` picks the selected
/// channels from the top, middle or bottom of the count ranking.
CategoryScore category_score(const FeatureSet& features, std::span<const int> labels,
                             std::span<const Index> omega, int category, int b, ScoreMode mode,
                             Slice slice = Slice::top);

/// Fisher ratio (mu_c - mu_u)^2 / (sigma_c^2 + sigma_u^2 + floor) over clip features.
struct OracleScore {
  VectorXd score;
  VectorXd mean_clean, sd_clean, mean_noisy, sd_noisy;
};

/// Rows of `clean` and `noisy` are clip features of one category.
OracleScore oracle_score(const RowMatrixXd& clean, const RowMatrixXd& noisy);

/// Throws InsufficientDataError when the category lacks clean or noisy members.
OracleScore oracle_score(const FeatureSet& features, std::span<const int> labels, const Mask& true_clean,
                         int category);

/// x restricted to `selected` (in that order), L2-renormalized; zero becomes 1/sqrt(b).
VectorXd truncate(const Eigen::Ref<const VectorXd>& x, std::span<const int> selected);

/// Normalized mean of the rows of `truncated` flagged clean. With no clean row, the half
/// of the rows with the highest `prior_similarity` is used (all rows if that is empty).
VectorXd clean_prototype(const RowMatrixXd& truncated, const Mask& clean, std::span<const double> prior_similarity);

struct DetectionConfig {
  int b = 8;
  ScoreMode mode = ScoreMode::var;
  double threshold = kDefaultThreshold;  // xi
  CtMode ct_mode = CtMode::ct;
  Slice slice = Slice::top;
};

/// State carried from the previous detection round.
struct DetectionContext {
  ReferenceSet omega;          // empty: every instance of the category
  Mask prototype_mask;         // previous estimated clean set; empty: all instances
  VectorXd prior_similarity;   // previous similarities, may be empty
  Mask true_clean;             // required by ct_oracle
};

struct SplitEstimate {
  VectorXd similarity;
  VectorXd noise_posterior;
  Mask clean_mask;
  double threshold = kDefaultThreshold;
  ReferenceSet next_omega;
  std::vector<std::vector<int>> selected;  // per category; empty for p_correction / skipped
  std::vector<std::string> warnings;

  Index clean_count() const;
};

/// Every instance clean (warm-up rounds).
SplitEstimate all_clean(std::span<const int> labels, int num_categories);

/// One noise-detection round over frozen features.
SplitEstimate split(const FeatureSet& features, std::span<const int> labels, int num_categories,
                    const DetectionConfig& config, const DetectionContext& context);

/// Context for the round after `previous` (Omega := previous clean set unless fixed).
DetectionContext next_context(const SplitEstimate& previous, Mask true_clean = {});

/// 2-means over the clip features of one category; ids of the larger cluster.
std::vector<Index> kmeans_init_omega(const FeatureSet& features, std::span<const int> labels, int category,
                                     std::uint64_t seed, int iterations = 50);

struct Pca {
  VectorXd mean;
  RowMatrixXd components;  // b x d, zero rows past the numerical rank
  VectorXd variance;       // eigenvalues of the retained directions
  double total_variance = 0.0;
  int rank = 0;
  std::vector<std::string> warnings;
};

/// Top-b principal directions by power iteration with deflation.
Pca pca(const RowMatrixXd& data, int b, int max_iterations = 200, double tolerance = 1e-8);

/// Mean-centered projection onto the top-b principal directions (n x b).
RowMatrixXd pca_project(const RowMatrixXd& data, int b);

/// instance_id,category,similarity,noise_posterior,clean_mask[,true_clean]
void write_split_csv(const std::filesystem::path& path, const SplitEstimate& split, std::span<const int> labels,
                     const Mask& true_clean = {});

}  // namespace neat::trunc
