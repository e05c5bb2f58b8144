#include "neat/eval.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace neat::eval {

Detection detection_metrics(const Mask& estimated_clean, const Mask& true_clean) {
  if (estimated_clean.size() != true_clean.size()) {
    throw ContractViolation("detection_metrics: mask sizes differ");
  }
  Index tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < true_clean.size(); ++i) {
    const bool est = estimated_clean[i] != 0;
    const bool truth = true_clean[i] != 0;
    tp += est && truth;
    fp += est && !truth;
    fn += !est && truth;
  }
  Detection d;
  if (tp + fp > 0) d.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) d.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (d.precision + d.recall > 0.0) d.f1 = 2.0 * d.precision * d.recall / (d.precision + d.recall);
  return d;
}

double intersection_score(const std::vector<int>& proposed, const std::vector<int>& oracle) {
  if (proposed.size() != oracle.size()) {
    throw ConfigError("intersection_score: selections of size " + std::to_string(proposed.size()) + " and " +
                      std::to_string(oracle.size()));
  }
  if (proposed.empty()) throw ConfigError("intersection_score: empty selection");
  std::vector<int> a = proposed, b = oracle;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<int> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  return 100.0 * static_cast<double>(both.size()) / static_cast<double>(a.size());
}

double intersection_score(std::span<const std::vector<int>> proposed, std::span<const std::vector<int>> oracle) {
  if (proposed.size() != oracle.size()) throw ConfigError("intersection_score: category counts differ");
  if (proposed.empty()) throw ConfigError("intersection_score: no categories");
  double total = 0.0;
  for (std::size_t a = 0; a < proposed.size(); ++a) total += intersection_score(proposed[a], oracle[a]);
  return total / static_cast<double>(proposed.size());
}

std::vector<std::vector<int>> oracle_selections(const FeatureSet& features, std::span<const int> labels,
                                                const Mask& true_clean, int num_categories, int b) {
  std::vector<std::vector<int>> out(num_categories);
  for (int a = 0; a < num_categories; ++a) {
    try {
      out[a] = trunc::top_channels(trunc::oracle_score(features, labels, true_clean, a).score, b);
    } catch (const InsufficientDataError&) {
      out[a].clear();
    }
  }
  return out;
}

std::vector<std::vector<int>> score_selections(const FeatureSet& features, std::span<const int> labels,
                                               int num_categories, int b, trunc::ScoreMode mode) {
  const trunc::ReferenceSet omega = trunc::full_reference(labels, num_categories);
  std::vector<std::vector<int>> out(num_categories);
  for (int a = 0; a < num_categories; ++a) {
    out[a] = trunc::category_score(features, labels, omega[a], a, b, mode).selected;
  }
  return out;
}

RankCurve rank_curve(const FeatureSet& features, std::span<const int> labels, const Mask& true_clean,
                     int num_categories, Statistic statistic, int b) {
  const Index d = features.dim();
  const auto oracle = oracle_selections(features, labels, true_clean, num_categories, b);
  const trunc::ScoreMode mode = statistic == Statistic::amplitude ? trunc::ScoreMode::ave : trunc::ScoreMode::var;

  RankCurve curve;
  curve.probability.assign(d, 0.0);
  for (int a = 0; a < num_categories; ++a) {
    if (oracle[a].empty()) continue;
    VectorXd mean = VectorXd::Zero(d);
    Index count = 0;
    for (Index i = 0; i < features.size(); ++i) {
      if (labels[i] != a) continue;
      mean += trunc::instance_score(features.frames_of(i), mode);
      ++count;
    }
    if (count == 0) continue;
    std::vector<std::uint8_t> in_oracle(d, 0);
    for (int c : oracle[a]) in_oracle[c] = 1;
    const std::vector<int> ranks = trunc::rank_channels(mean / static_cast<double>(count));
    for (Index r = 0; r < d; ++r) curve.probability[r] += in_oracle[ranks[r]];
    ++curve.categories;
  }
  if (curve.categories > 0) {
    for (double& p : curve.probability) p /= static_cast<double>(curve.categories);
  }
  return curve;
}

std::string metrics_row(const EpochMetrics& m, bool with_wall_time) {
  std::string row = std::to_string(m.epoch);
  for (double v : {m.ce_loss, m.ncl_loss, m.detection_precision, m.detection_recall, m.detection_f1}) {
    row += ',';
    row += format_number(v);
  }
  row += ',';
  row += std::to_string(m.estimated_clean_count);
  row += ',';
  row += format_number(m.test_accuracy);
  row += ',';
  row += format_number(with_wall_time ? m.wall_time_seconds : 0.0);
  return row;
}

void write_metrics_header(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMetricsHeader << '\n';
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

void append_metrics_row(const std::filesystem::path& path, const EpochMetrics& m, bool with_wall_time) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << metrics_row(m, with_wall_time) << '\n';
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<EpochMetrics> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw IoError(path.string() + ": missing or unexpected header");
  }
  std::vector<EpochMetrics> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 9 columns, got " +
                    std::to_string(cells.size()));
    }
    EpochMetrics m;
    try {
      std::size_t used = 0;
      auto number = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      auto integer = [&](const std::string& s) {
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      m.epoch = static_cast<int>(integer(cells[0]));
      m.ce_loss = number(cells[1]);
      m.ncl_loss = number(cells[2]);
      m.detection_precision = number(cells[3]);
      m.detection_recall = number(cells[4]);
      m.detection_f1 = number(cells[5]);
      m.estimated_clean_count = integer(cells[6]);
      m.test_accuracy = number(cells[7]);
      m.wall_time_seconds = number(cells[8]);
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": malformed value");
    }
    rows.push_back(m);
  }
  return rows;
}

Summary summarize(std::span<const EpochMetrics> history) {
  if (history.empty()) throw IoError("no epochs to summarize");
  Summary s;
  s.epochs = static_cast<int>(history.size());
  s.best_test_accuracy = history.front().test_accuracy;
  s.best_test_epoch = history.front().epoch;
  s.best_f1 = history.front().detection_f1;
  s.best_f1_epoch = history.front().epoch;
  for (const auto& m : history) {
    if (m.test_accuracy > s.best_test_accuracy) {
      s.best_test_accuracy = m.test_accuracy;
      s.best_test_epoch = m.epoch;
    }
    if (m.detection_f1 > s.best_f1) {
      s.best_f1 = m.detection_f1;
      s.best_f1_epoch = m.epoch;
    }
  }
  const std::size_t tail = std::min<std::size_t>(5, history.size());
  for (std::size_t i = history.size() - tail; i < history.size(); ++i) {
    s.last5_test_accuracy += history[i].test_accuracy;
    s.last5_f1 += history[i].detection_f1;
  }
  s.last5_test_accuracy /= static_cast<double>(tail);
  s.last5_f1 /= static_cast<double>(tail);
  return s;
}

}  // namespace neat::eval
