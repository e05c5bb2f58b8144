#include "neat/trunc.hpp"
#include "neat/gmm.hpp"
#include "neat/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace neat::trunc {

std::string_view to_string(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::ave: return "ave";
    case ScoreMode::var: return "var";
    case ScoreMode::img: return "img";
  }
  return "unknown";
}

std::string_view to_string(CtMode mode) {
  switch (mode) {
    case CtMode::ct: return "ct";
    case CtMode::ct_all: return "ct_all";
    case CtMode::ct_oracle: return "ct_oracle";
    case CtMode::ct_star: return "ct_star";
    case CtMode::p_correction: return "p_correction";
  }
  return "unknown";
}

std::string_view to_string(Slice slice) {
  switch (slice) {
    case Slice::top: return "top";
    case Slice::middle: return "middle";
    case Slice::bottom: return "bottom";
  }
  return "unknown";
}

ScoreMode parse_score_mode(std::string_view name) {
  for (auto m : {ScoreMode::ave, ScoreMode::var, ScoreMode::img}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown score_mode: " + std::string(name));
}

CtMode parse_ct_mode(std::string_view name) {
  for (auto m : {CtMode::ct, CtMode::ct_all, CtMode::ct_oracle, CtMode::ct_star, CtMode::p_correction}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown ct_mode: " + std::string(name));
}

Slice parse_slice(std::string_view name) {
  for (auto s : {Slice::top, Slice::middle, Slice::bottom}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown slice: " + std::string(name));
}

ReferenceSet full_reference(std::span<const int> labels, int num_categories) {
  ReferenceSet omega(num_categories);
  for (std::size_t i = 0; i < labels.size(); ++i) omega.at(labels[i]).push_back(static_cast<Index>(i));
  return omega;
}

ReferenceSet anchor_reference(std::span<const int> labels, const Mask& true_clean, int num_categories,
                              int per_category) {
  ReferenceSet omega(num_categories);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& bucket = omega.at(labels[i]);
    if (true_clean.at(i) && static_cast<int>(bucket.size()) < per_category) bucket.push_back(static_cast<Index>(i));
  }
  return omega;
}

std::vector<int> rank_channels(const VectorXd& score) {
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
  return order;
}

std::vector<int> top_channels(const VectorXd& score, int b) {
  if (b < 1 || b > score.size()) throw ConfigError("b must lie in [1, d]");
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + b, order.end(), [&](int a, int c) {
    return score[a] > score[c] || (score[a] == score[c] && a < c);
  });
  order.resize(b);
  return order;
}

CategoryScore category_score(const FeatureSet& features, std::span<const int> labels, std::span<const Index> omega,
                             int category, int b, ScoreMode mode, Slice slice) {
  const Index d = features.dim();
  if (b < 1 || b > d) throw ConfigError("b must lie in [1, d]");
  if (slice != Slice::top && 3 * b > d) throw ConfigError("rank slices overlap when b > d/3");

  std::vector<Index> fallback;
  if (omega.empty()) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == category) fallback.push_back(static_cast<Index>(i));
    }
    if (fallback.empty()) throw InsufficientDataError("category has no instances");
    omega = fallback;
  }

  CategoryScore out;
  out.category = category;
  out.counts = VectorXi::Zero(d);
  for (Index id : omega) {
    const VectorXd phi = instance_score(features.frames_of(id), mode);
    for (int c : top_channels(phi, b)) ++out.counts[c];
  }
  const std::vector<int> ranking = rank_channels(out.counts.cast<double>());
  Index begin = 0;
  if (slice == Slice::middle) begin = (d - b) / 2;
  if (slice == Slice::bottom) begin = d - b;
  out.selected.assign(ranking.begin() + begin, ranking.begin() + begin + b);
  return out;
}

OracleScore oracle_score(const RowMatrixXd& clean, const RowMatrixXd& noisy) {
  if (clean.rows() == 0 || noisy.rows() == 0) throw InsufficientDataError("oracle score needs clean and noisy members");
  OracleScore out;
  out.mean_clean = clean.colwise().mean().transpose();
  out.mean_noisy = noisy.colwise().mean().transpose();
  const VectorXd var_clean =
      (clean.rowwise() - out.mean_clean.transpose()).array().square().colwise().mean().transpose();
  const VectorXd var_noisy =
      (noisy.rowwise() - out.mean_noisy.transpose()).array().square().colwise().mean().transpose();
  out.sd_clean = var_clean.array().sqrt();
  out.sd_noisy = var_noisy.array().sqrt();
  out.score = (out.mean_clean - out.mean_noisy).array().square() /
              (var_clean.array() + var_noisy.array() + kOracleVarianceFloor);
  return out;
}

OracleScore oracle_score(const FeatureSet& features, std::span<const int> labels, const Mask& true_clean,
                         int category) {
  std::vector<Index> clean_ids, noisy_ids;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != category) continue;
    (true_clean.at(i) ? clean_ids : noisy_ids).push_back(static_cast<Index>(i));
  }
  return oracle_score(features.clips(clean_ids, Eigen::all), features.clips(noisy_ids, Eigen::all));
}

VectorXd truncate(const Eigen::Ref<const VectorXd>& x, std::span<const int> selected) {
  VectorXd w(selected.size());
  for (std::size_t j = 0; j < selected.size(); ++j) {
    if (selected[j] < 0 || selected[j] >= x.size()) throw ContractViolation("truncate: channel index out of range");
    w[j] = x[selected[j]];
  }
  normalize_or_uniform(w);
  return w;
}

VectorXd clean_prototype(const RowMatrixXd& truncated, const Mask& clean, std::span<const double> prior_similarity) {
  if (truncated.rows() == 0) throw InsufficientDataError("clean_prototype: no instances");
  VectorXd sum = VectorXd::Zero(truncated.cols());
  Index used = 0;
  for (Index r = 0; r < truncated.rows(); ++r) {
    if (clean.at(r)) {
      sum += truncated.row(r).transpose();
      ++used;
    }
  }
  if (used == 0) {
    std::vector<Index> order(truncated.rows());
    std::iota(order.begin(), order.end(), Index{0});
    Index keep = order.size();
    if (static_cast<Index>(prior_similarity.size()) == truncated.rows()) {
      std::stable_sort(order.begin(), order.end(),
                       [&](Index a, Index b) { return prior_similarity[a] > prior_similarity[b]; });
      keep = (truncated.rows() + 1) / 2;
    }
    for (Index j = 0; j < keep; ++j) sum += truncated.row(order[j]).transpose();
  }
  normalize_or_uniform(sum);
  return sum;
}

Index SplitEstimate::clean_count() const {
  return std::count(clean_mask.begin(), clean_mask.end(), std::uint8_t{1});
}

SplitEstimate all_clean(std::span<const int> labels, int num_categories) {
  SplitEstimate out;
  const auto m = static_cast<Index>(labels.size());
  out.similarity = VectorXd::Ones(m);
  out.noise_posterior = VectorXd::Zero(m);
  out.clean_mask.assign(m, 1);
  out.next_omega = full_reference(labels, num_categories);
  out.selected.resize(num_categories);
  return out;
}

namespace {

struct CategoryResult {
  std::vector<int> selected;
  std::vector<std::string> warnings;
};

std::string category_tag(int a) { return "category " + std::to_string(a) + ": "; }

// Marks the ceil(n/2) most similar members clean.
void keep_top_half(std::span<const Index> ids, SplitEstimate& out) {
  std::vector<Index> order(ids.begin(), ids.end());
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return out.similarity[a] > out.similarity[b]; });
  for (std::size_t j = 0; j < (order.size() + 1) / 2; ++j) out.clean_mask[order[j]] = 1;
}

CategoryResult split_category(const FeatureSet& features, std::span<const int> labels, int a,
                              std::span<const Index> ids, const DetectionConfig& config,
                              const DetectionContext& context, SplitEstimate& out) {
  CategoryResult result;
  const Index d = features.dim();
  const Index n = static_cast<Index>(ids.size());

  std::span<const Index> omega;
  if (!context.omega.empty() && !context.omega.at(a).empty()) omega = context.omega[a];
  if (!context.omega.empty() && context.omega.at(a).empty() && config.ct_mode != CtMode::ct_all) {
    result.warnings.push_back(category_tag(a) + "empty reference set, using all instances");
  }

  Mask proto_clean(n, 1);
  if (!context.prototype_mask.empty()) {
    for (Index j = 0; j < n; ++j) proto_clean[j] = context.prototype_mask.at(ids[j]);
  }
  std::vector<double> prior;
  if (context.prior_similarity.size() == static_cast<Index>(labels.size())) {
    for (Index id : ids) prior.push_back(context.prior_similarity[id]);
  }

  RowMatrixXd truncated;
  switch (config.ct_mode) {
    case CtMode::ct_all:
      result.selected.resize(d);
      std::iota(result.selected.begin(), result.selected.end(), 0);
      break;
    case CtMode::ct_oracle: {
      if (context.true_clean.empty()) throw ConfigError("ct_oracle requires the true clean mask");
      try {
        result.selected = top_channels(oracle_score(features, labels, context.true_clean, a).score, config.b);
        for (Index j = 0; j < n; ++j) proto_clean[j] = context.true_clean[ids[j]];
      } catch (const InsufficientDataError&) {
        result.warnings.push_back(category_tag(a) + "oracle undefined, using histogram selection");
        result.selected = category_score(features, labels, omega, a, config.b, config.mode).selected;
      }
      break;
    }
    case CtMode::p_correction: {
      const RowMatrixXd members = features.clips(ids, Eigen::all);
      if (n < 2) {
        truncated = RowMatrixXd::Constant(n, config.b, 1.0 / std::sqrt(double(config.b)));
      } else {
        Pca basis = pca(members, config.b);
        for (auto& w : basis.warnings) result.warnings.push_back(category_tag(a) + w);
        truncated = (members.rowwise() - basis.mean.transpose()) * basis.components.transpose();
        for (Index r = 0; r < n; ++r) {
          auto row = truncated.row(r);
          normalize_or_uniform(row);
        }
      }
      break;
    }
    case CtMode::ct:
    case CtMode::ct_star:
      result.selected = category_score(features, labels, omega, a, config.b, config.mode, config.slice).selected;
      break;
  }

  if (config.ct_mode != CtMode::p_correction) {
    truncated.resize(n, static_cast<Index>(result.selected.size()));
    for (Index j = 0; j < n; ++j) truncated.row(j) = truncate(features.clips.row(ids[j]).transpose(), result.selected);
  }

  const VectorXd prototype = clean_prototype(truncated, proto_clean, prior);
  std::vector<double> sims(n);
  for (Index j = 0; j < n; ++j) {
    sims[j] = truncated.row(j).dot(prototype);
    out.similarity[ids[j]] = sims[j];
  }

  auto mark_all_clean = [&](const std::string& why) {
    result.warnings.push_back(category_tag(a) + why + ", all instances marked clean");
    for (Index id : ids) {
      out.noise_posterior[id] = 0.0;
      out.clean_mask[id] = 1;
    }
  };

  if (n < 4) {
    mark_all_clean("fewer than 4 instances");
    return result;
  }
  const gmm::Fit fit = gmm::fit(sims);
  if (fit.params.degenerate) {
    mark_all_clean("degenerate similarity mixture");
    return result;
  }
  Index clean = 0;
  for (Index j = 0; j < n; ++j) {
    const double p_noise = gmm::posterior(fit.params, sims[j])[0];
    out.noise_posterior[ids[j]] = p_noise;
    out.clean_mask[ids[j]] = p_noise < config.threshold;
    clean += out.clean_mask[ids[j]];
  }
  if (clean == 0) {
    result.warnings.push_back(category_tag(a) + "empty clean set, keeping the most similar half");
    keep_top_half(ids, out);
  }
  return result;
}

}  // namespace

SplitEstimate split(const FeatureSet& features, std::span<const int> labels, int num_categories,
                    const DetectionConfig& config, const DetectionContext& context) {
  const auto m = static_cast<Index>(labels.size());
  if (features.size() != m) throw ContractViolation("split: feature/label count mismatch");
  if (config.b < 1 || (config.ct_mode != CtMode::ct_all && config.b > features.dim())) {
    throw ConfigError("b must lie in [1, d]");
  }

  SplitEstimate out;
  out.threshold = config.threshold;
  out.similarity = VectorXd::Zero(m);
  out.noise_posterior = VectorXd::Zero(m);
  out.clean_mask.assign(m, 0);
  out.selected.resize(num_categories);

  const ReferenceSet members = full_reference(labels, num_categories);
  std::vector<CategoryResult> results(num_categories);
  parallel_for(num_categories, [&](Index a) {
    if (members[a].empty()) {
      results[a].warnings.push_back(category_tag(static_cast<int>(a)) + "no instances, skipped");
      return;
    }
    results[a] = split_category(features, labels, static_cast<int>(a), members[a], config, context, out);
  });

  out.next_omega.resize(num_categories);
  for (int a = 0; a < num_categories; ++a) {
    out.selected[a] = std::move(results[a].selected);
    for (auto& w : results[a].warnings) out.warnings.push_back(std::move(w));
    if (config.ct_mode == CtMode::ct_star && !context.omega.empty()) {
      out.next_omega[a] = context.omega.at(a);
    } else {
      for (Index id : members[a]) {
        if (out.clean_mask[id]) out.next_omega[a].push_back(id);
      }
    }
  }
  return out;
}

DetectionContext next_context(const SplitEstimate& previous, Mask true_clean) {
  DetectionContext ctx;
  ctx.omega = previous.next_omega;
  ctx.prototype_mask = previous.clean_mask;
  ctx.prior_similarity = previous.similarity;
  ctx.true_clean = std::move(true_clean);
  return ctx;
}

std::vector<Index> kmeans_init_omega(const FeatureSet& features, std::span<const int> labels, int category,
                                     std::uint64_t seed, int iterations) {
  std::vector<Index> ids;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == category) ids.push_back(static_cast<Index>(i));
  }
  if (ids.size() < 2) return ids;
  const RowMatrixXd points = features.clips(ids, Eigen::all);
  const Index n = points.rows();

  // Seeded init: a random member and the member farthest from it.
  CounterRng rng(derive_seed(seed, static_cast<std::uint64_t>(category)));
  const Index first = static_cast<Index>(rng.below(n));
  Index second = first;
  double best = 0.0;
  for (Index r = 0; r < n; ++r) {
    const double dist = (points.row(r) - points.row(first)).squaredNorm();
    if (dist > best) {
      best = dist;
      second = r;
    }
  }
  if (best == 0.0) return ids;

  RowMatrixXd centers(2, points.cols());
  centers.row(0) = points.row(first);
  centers.row(1) = points.row(second);
  std::vector<int> assign(n, -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Index r = 0; r < n; ++r) {
      const double d0 = (points.row(r) - centers.row(0)).squaredNorm();
      const double d1 = (points.row(r) - centers.row(1)).squaredNorm();
      const int c = d1 < d0 ? 1 : 0;
      changed |= assign[r] != c;
      assign[r] = c;
    }
    for (int c = 0; c < 2; ++c) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(points.cols());
      Index count = 0;
      for (Index r = 0; r < n; ++r) {
        if (assign[r] == c) {
          sum += points.row(r);
          ++count;
        }
      }
      if (count > 0) centers.row(c) = sum / static_cast<double>(count);
    }
    if (!changed) break;
  }
  const Index size1 = std::count(assign.begin(), assign.end(), 1);
  const Index size0 = n - size1;
  int keep = size0 > size1 ? 0 : (size1 > size0 ? 1 : assign[0]);
  std::vector<Index> out;
  for (Index r = 0; r < n; ++r) {
    if (assign[r] == keep) out.push_back(ids[r]);
  }
  return out;
}

Pca pca(const RowMatrixXd& data, int b, int max_iterations, double tolerance) {
  const Index n = data.rows();
  const Index d = data.cols();
  if (n < 2) throw InsufficientDataError("pca needs at least two rows");
  if (b < 1 || b > d) throw ConfigError("pca: b must lie in [1, d]");

  Pca out;
  out.mean = data.colwise().mean().transpose();
  const RowMatrixXd centered = data.rowwise() - out.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  out.total_variance = cov.trace();
  out.components = RowMatrixXd::Zero(b, d);
  out.variance = VectorXd::Zero(b);
  const double rank_floor = 1e-12 * std::max(out.total_variance, 1e-300);

  CounterRng rng(0x5043415F696E6974ull);
  for (int k = 0; k < b; ++k) {
    VectorXd v(d);
    for (Index j = 0; j < d; ++j) v[j] = rng.normal();
    auto orthogonalize = [&](VectorXd& u) {
      for (int j = 0; j < k; ++j) u -= out.components.row(j).dot(u) * out.components.row(j).transpose();
    };
    orthogonalize(v);
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
      VectorXd next = cov * v;
      // Keeps the basis orthonormal when an earlier direction has not fully converged.
      orthogonalize(next);
      const double norm = next.norm();
      if (norm <= rank_floor) {
        lambda = 0.0;
        break;
      }
      next /= norm;
      if (next.dot(v) < 0) next = -next;
      const double change = (next - v).norm();
      v = next;
      lambda = v.dot(cov * v);
      if (change < tolerance) break;
    }
    if (lambda <= rank_floor) {
      out.warnings.push_back("rank " + std::to_string(k) + " < b=" + std::to_string(b) +
                             ", remaining directions zero-padded");
      break;
    }
    // Deterministic sign: largest-magnitude entry positive.
    Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    out.components.row(k) = v.transpose();
    out.variance[k] = lambda;
    out.rank = k + 1;
    cov -= lambda * v * v.transpose();
  }
  return out;
}

RowMatrixXd pca_project(const RowMatrixXd& data, int b) {
  const Pca basis = pca(data, b);
  return (data.rowwise() - basis.mean.transpose()) * basis.components.transpose();
}

void write_split_csv(const std::filesystem::path& path, const SplitEstimate& split, std::span<const int> labels,
                     const Mask& true_clean) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const bool with_truth = !true_clean.empty();
  out << "instance_id,category,similarity,noise_posterior,clean_mask";
  if (with_truth) out << ",true_clean";
  out << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << i << ',' << labels[i] << ',' << format_number(split.similarity[i]) << ','
        << format_number(split.noise_posterior[i]) << ',' << int(split.clean_mask[i]);
    if (with_truth) out << ',' << int(true_clean[i]);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace neat::trunc
