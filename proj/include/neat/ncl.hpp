#pragma once

// Noise contrastive learning: memory bank of projected keys, k-NN retrieval, positive /
// negative key-set construction for the NCL, CL and SCL strategies, the InfoNCE loss with
// its query gradient, and pseudo-label targets for the PL strategies.

#include "neat/common.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>

namespace neat::ncl {

enum class Strategy { ncl, cl, scl, pl_h, pl_s, pl_k, none };

std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view name);
bool is_contrastive(Strategy strategy);
bool is_pseudo_label(Strategy strategy);

inline constexpr double kDefaultTemperature = 0.1;
inline constexpr int kDefaultNeighbors = 16;
inline constexpr int kPseudoLabelNeighbors = 64;

struct KeyMeta {
  int category = 0;
  bool clean = true;
  Index instance_id = -1;
};

struct ProjectedKey {
  VectorXd z;  // unit norm
  KeyMeta meta;
};

/// FIFO queue of projected keys; the oldest key is evicted first.
class MemoryBank {
 public:
  explicit MemoryBank(Index capacity);

  static Index capacity_for(int num_categories) { return 16 * Index{num_categories}; }

  void push(ProjectedKey key);
  Index size() const { return static_cast<Index>(keys_.size()); }
  Index capacity() const { return capacity_; }
  bool empty() const { return keys_.empty(); }
  const ProjectedKey& operator[](Index i) const { return keys_[i]; }  // 0 = oldest

 private:
  Index capacity_;
  std::deque<ProjectedKey> keys_;
};

/// Keys of a frozen bank snapshot (oldest first) followed by extra rows such as the second
/// views of the current batch. Key sets index into this pool.
struct KeyPool {
  RowMatrixXd z;
  std::vector<KeyMeta> meta;
  Index bank_size = 0;

  static KeyPool from_bank(const MemoryBank& bank, Index dim);
  Index append(const Eigen::Ref<const VectorXd>& z_row, const KeyMeta& meta);
};

struct KnnResult {
  std::vector<Index> indices;  // into the pool, most similar first
  bool shortfall = false;
};

using KeyFilter = std::function<bool(const KeyMeta&)>;

/// B bank keys with the largest inner product to `query`, excluding `exclude_id`; ties go to
/// the older key.
KnnResult knn(const Eigen::Ref<const VectorXd>& query, const KeyPool& pool, int neighbors, Index exclude_id,
              const KeyFilter& filter = {});

struct KeySets {
  std::vector<Index> positives;
  std::vector<Index> negatives;
  bool skipped() const { return positives.empty(); }
};

struct ContrastiveConfig {
  double temperature = kDefaultTemperature;
  int neighbors = kDefaultNeighbors;
  Strategy strategy = Strategy::ncl;
  bool open_set_mode = false;
  double lambda_r = 1.0;
};

struct Query {
  VectorXd z;
  KeyMeta meta;                      // category = annotated label, clean = split estimate
  std::optional<Index> second_view;  // pool row of the query's other view
};

/// Positive / negative pool rows for one query. Only bank rows and the query's own second
/// view are ever used.
KeySets build_key_sets(const Query& query, const KeyPool& pool, const ContrastiveConfig& config);

struct InfoNceResult {
  double loss = 0.0;
  VectorXd grad;  // d loss / d z_q, keys held constant
};

/// -(1/|P|) sum_{+} log softmax over P u N of z_q . z_j / tau, with max-subtracted
/// log-sum-exp. Throws ContractViolation when P is empty.
InfoNceResult info_nce(const Eigen::Ref<const VectorXd>& query, const RowMatrixXd& keys, const KeySets& sets,
                       double temperature);

struct BatchLoss {
  double loss = 0.0;          // lambda_r * (mean clean term + mean noisy term)
  double clean_term = 0.0;
  double noisy_term = 0.0;
  Index clean_evaluated = 0;
  Index noisy_evaluated = 0;
  Index skipped = 0;
  RowMatrixXd grad;           // one row per query: d loss / d z_q
  std::vector<std::string> warnings;
};

/// Contrastive regularizer over a batch against a frozen pool. The two means follow the
/// clean / noisy split; skipped queries leave their mean's denominator.
BatchLoss batch_loss(std::span<const Query> queries, const KeyPool& pool, const ContrastiveConfig& config);

/// Enqueue keys after the loss was evaluated.
void enqueue(MemoryBank& bank, std::span<const ProjectedKey> keys);

/// One-hot of the most probable class.
VectorXd pseudo_label_hard(const Eigen::Ref<const VectorXd>& probabilities);
/// The probability vector itself.
VectorXd pseudo_label_soft(const Eigen::Ref<const VectorXd>& probabilities);

struct VoteResult {
  VectorXd distribution;
  bool shortfall = false;
};

/// Normalized label histogram of the `neighbors` reference members closest (inner product)
/// to `query`; all of the reference set votes when it is smaller.
VoteResult pseudo_label_knn(const Eigen::Ref<const VectorXd>& query, const RowMatrixXd& reference_features,
                            std::span<const int> reference_labels, int num_categories,
                            int neighbors = kPseudoLabelNeighbors);

}  // namespace neat::ncl
