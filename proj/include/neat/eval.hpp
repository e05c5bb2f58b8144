#pragma once

// Detection and classification metrics, oracle-intersection scores, channel-rank curves.

#include "neat/common.hpp"
#include "neat/features.hpp"
#include "neat/trunc.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace neat::eval {

struct EpochMetrics {
  int epoch = 0;
  double ce_loss = 0.0;
  double ncl_loss = 0.0;
  double detection_precision = 0.0;
  double detection_recall = 0.0;
  double detection_f1 = 0.0;
  Index estimated_clean_count = 0;
  double test_accuracy = 0.0;
  double wall_time_seconds = 0.0;
};

struct Detection {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Clean is the positive class. Zero denominators give 0.
Detection detection_metrics(const Mask& estimated_clean, const Mask& true_clean);

/// 100 * |proposed n oracle| / b, averaged over categories. Throws ConfigError when any
/// pair of selections differs in size.
double intersection_score(std::span<const std::vector<int>> proposed, std::span<const std::vector<int>> oracle);
double intersection_score(const std::vector<int>& proposed, const std::vector<int>& oracle);

enum class Statistic { amplitude, variance };

/// p[r] = fraction of categories whose channel of rank r (0 = largest category-averaged
/// statistic) is in that category's oracle top-b set.
struct RankCurve {
  std::vector<double> probability;
  int categories = 0;
};

RankCurve rank_curve(const FeatureSet& features, std::span<const int> labels, const Mask& true_clean,
                     int num_categories, Statistic statistic, int b);

/// Oracle top-b selections per category; categories with an undefined oracle get an empty set.
std::vector<std::vector<int>> oracle_selections(const FeatureSet& features, std::span<const int> labels,
                                                const Mask& true_clean, int num_categories, int b);

/// Histogram selections per category over the full reference set (first detection round).
std::vector<std::vector<int>> score_selections(const FeatureSet& features, std::span<const int> labels,
                                               int num_categories, int b, trunc::ScoreMode mode);

// metrics.csv
inline constexpr const char* kMetricsHeader =
    "epoch,ce_loss,ncl_loss,det_precision,det_recall,det_f1,n_clean_est,test_acc,wall_s";

std::string metrics_row(const EpochMetrics& m, bool with_wall_time);
/// Header write truncates; each appended row is flushed immediately.
void write_metrics_header(const std::filesystem::path& path);
void append_metrics_row(const std::filesystem::path& path, const EpochMetrics& m, bool with_wall_time);
/// Throws IoError on a malformed file.
std::vector<EpochMetrics> read_metrics(const std::filesystem::path& path);

struct Summary {
  double best_test_accuracy = 0.0;
  int best_test_epoch = 0;
  double best_f1 = 0.0;
  int best_f1_epoch = 0;
  double last5_test_accuracy = 0.0;
  double last5_f1 = 0.0;
  int epochs = 0;
};

/// Best values take the earliest epoch on ties. Throws IoError on an empty history.
Summary summarize(std::span<const EpochMetrics> history);

}  // namespace neat::eval
