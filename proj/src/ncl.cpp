#include "neat/ncl.hpp"

#include <algorithm>
#include <numeric>

namespace neat::ncl {

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::ncl: return "ncl";
    case Strategy::cl: return "cl";
    case Strategy::scl: return "scl";
    case Strategy::pl_h: return "pl_h";
    case Strategy::pl_s: return "pl_s";
    case Strategy::pl_k: return "pl_k";
    case Strategy::none: return "none";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::ncl, Strategy::cl, Strategy::scl, Strategy::pl_h, Strategy::pl_s, Strategy::pl_k,
                 Strategy::none}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown strategy: " + std::string(name));
}

bool is_contrastive(Strategy s) { return s == Strategy::ncl || s == Strategy::cl || s == Strategy::scl; }
bool is_pseudo_label(Strategy s) { return s == Strategy::pl_h || s == Strategy::pl_s || s == Strategy::pl_k; }

MemoryBank::MemoryBank(Index capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("memory bank capacity must be positive");
}

void MemoryBank::push(ProjectedKey key) {
  if (static_cast<Index>(keys_.size()) == capacity_) keys_.pop_front();
  keys_.push_back(std::move(key));
}

KeyPool KeyPool::from_bank(const MemoryBank& bank, Index dim) {
  KeyPool pool;
  pool.bank_size = bank.size();
  pool.z.resize(bank.size(), dim);
  pool.meta.reserve(bank.size());
  for (Index i = 0; i < bank.size(); ++i) {
    pool.z.row(i) = bank[i].z.transpose();
    pool.meta.push_back(bank[i].meta);
  }
  return pool;
}

Index KeyPool::append(const Eigen::Ref<const VectorXd>& z_row, const KeyMeta& key_meta) {
  const Index row = z.rows();
  z.conservativeResize(row + 1, z_row.size());
  z.row(row) = z_row.transpose();
  meta.push_back(key_meta);
  return row;
}

KnnResult knn(const Eigen::Ref<const VectorXd>& query, const KeyPool& pool, int neighbors, Index exclude_id,
              const KeyFilter& filter) {
  std::vector<Index> eligible;
  eligible.reserve(pool.bank_size);
  for (Index i = 0; i < pool.bank_size; ++i) {
    if (pool.meta[i].instance_id == exclude_id) continue;
    if (filter && !filter(pool.meta[i])) continue;
    eligible.push_back(i);
  }
  const VectorXd sims = pool.z.topRows(pool.bank_size) * query;
  KnnResult out;
  const auto take = static_cast<std::size_t>(std::max(neighbors, 0));
  out.shortfall = eligible.size() < take;
  const std::size_t k = std::min(take, eligible.size());
  std::partial_sort(eligible.begin(), eligible.begin() + k, eligible.end(),
                    [&](Index a, Index b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
  eligible.resize(k);
  out.indices = std::move(eligible);
  return out;
}

KeySets build_key_sets(const Query& query, const KeyPool& pool, const ContrastiveConfig& config) {
  KeySets sets;
  const Index self = query.meta.instance_id;
  const int category = query.meta.category;
  auto bank_rows = [&](auto&& predicate, std::vector<Index>& into) {
    for (Index i = 0; i < pool.bank_size; ++i) {
      const KeyMeta& m = pool.meta[i];
      if (m.instance_id != self && predicate(m, i)) into.push_back(i);
    }
  };

  switch (config.strategy) {
    case Strategy::ncl:
      if (query.meta.clean) {
        bank_rows([&](const KeyMeta& m, Index) { return m.clean && m.category == category; }, sets.positives);
        if (query.second_view) sets.positives.push_back(*query.second_view);
        bank_rows([&](const KeyMeta& m, Index) { return m.clean ? m.category != category : m.category == category; },
                  sets.negatives);
      } else {
        KeyFilter filter;
        if (config.open_set_mode) filter = [](const KeyMeta& m) { return !m.clean; };
        sets.positives = knn(query.z, pool, config.neighbors, self, filter).indices;
        std::vector<std::uint8_t> in_positive(pool.bank_size, 0);
        for (Index i : sets.positives) in_positive[i] = 1;
        if (query.second_view) sets.positives.push_back(*query.second_view);
        bank_rows([&](const KeyMeta&, Index i) { return !in_positive[i]; }, sets.negatives);
      }
      break;
    case Strategy::cl:
      if (query.second_view) sets.positives.push_back(*query.second_view);
      bank_rows([](const KeyMeta&, Index) { return true; }, sets.negatives);
      break;
    case Strategy::scl:
      if (!query.meta.clean) break;
      bank_rows([&](const KeyMeta& m, Index) { return m.clean && m.category == category; }, sets.positives);
      if (query.second_view) sets.positives.push_back(*query.second_view);
      bank_rows([&](const KeyMeta& m, Index) { return m.clean && m.category != category; }, sets.negatives);
      break;
    default:
      break;
  }
  if (sets.positives.empty()) sets.negatives.clear();
  return sets;
}

InfoNceResult info_nce(const Eigen::Ref<const VectorXd>& query, const RowMatrixXd& keys, const KeySets& sets,
                       double temperature) {
  if (sets.positives.empty()) throw ContractViolation("info_nce: empty positive set");
  if (!(temperature > 0.0)) throw ContractViolation("info_nce: temperature must be positive");

  const std::size_t np = sets.positives.size();
  const std::size_t total = np + sets.negatives.size();
  std::vector<Index> rows(sets.positives);
  rows.insert(rows.end(), sets.negatives.begin(), sets.negatives.end());

  VectorXd logits(total);
  for (std::size_t j = 0; j < total; ++j) logits[j] = keys.row(rows[j]).dot(query) / temperature;
  const double peak = logits.maxCoeff();
  const VectorXd expd = (logits.array() - peak).exp();
  const double lse = peak + std::log(expd.sum());
  const VectorXd softmax = expd / expd.sum();

  InfoNceResult out;
  out.loss = lse - logits.head(np).mean();
  out.grad = VectorXd::Zero(query.size());
  for (std::size_t j = 0; j < total; ++j) {
    const double weight = softmax[j] - (j < np ? 1.0 / static_cast<double>(np) : 0.0);
    out.grad += weight * keys.row(rows[j]).transpose();
  }
  out.grad /= temperature;
  return out;
}

BatchLoss batch_loss(std::span<const Query> queries, const KeyPool& pool, const ContrastiveConfig& config) {
  BatchLoss out;
  const Index n = static_cast<Index>(queries.size());
  const Index dim = pool.z.cols();
  out.grad = RowMatrixXd::Zero(n, dim);
  if (!is_contrastive(config.strategy) || n == 0) return out;

  std::vector<InfoNceResult> results(n);
  std::vector<std::uint8_t> evaluated(n, 0);
  parallel_for(n, [&](Index q) {
    const KeySets sets = build_key_sets(queries[q], pool, config);
    if (sets.skipped()) return;
    results[q] = info_nce(queries[q].z, pool.z, sets, config.temperature);
    evaluated[q] = 1;
  });

  // Fixed reduction order: ascending instance id.
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return queries[a].meta.instance_id < queries[b].meta.instance_id; });
  for (Index q : order) {
    if (!evaluated[q]) {
      ++out.skipped;
      continue;
    }
    if (queries[q].meta.clean) {
      out.clean_term += results[q].loss;
      ++out.clean_evaluated;
    } else {
      out.noisy_term += results[q].loss;
      ++out.noisy_evaluated;
    }
  }
  if (out.clean_evaluated == 0 && out.noisy_evaluated == 0) {
    out.warnings.push_back("no evaluable contrastive query in batch");
    return out;
  }
  if (out.clean_evaluated) out.clean_term /= static_cast<double>(out.clean_evaluated);
  if (out.noisy_evaluated) out.noisy_term /= static_cast<double>(out.noisy_evaluated);
  out.loss = config.lambda_r * (out.clean_term + out.noisy_term);
  for (Index q = 0; q < n; ++q) {
    if (!evaluated[q]) continue;
    const double denom = static_cast<double>(queries[q].meta.clean ? out.clean_evaluated : out.noisy_evaluated);
    out.grad.row(q) = (config.lambda_r / denom) * results[q].grad.transpose();
  }
  return out;
}

void enqueue(MemoryBank& bank, std::span<const ProjectedKey> keys) {
  for (const auto& key : keys) bank.push(key);
}

VectorXd pseudo_label_hard(const Eigen::Ref<const VectorXd>& probabilities) {
  Index arg;
  probabilities.maxCoeff(&arg);
  VectorXd out = VectorXd::Zero(probabilities.size());
  out[arg] = 1.0;
  return out;
}

VectorXd pseudo_label_soft(const Eigen::Ref<const VectorXd>& probabilities) { return probabilities; }

VoteResult pseudo_label_knn(const Eigen::Ref<const VectorXd>& query, const RowMatrixXd& reference_features,
                            std::span<const int> reference_labels, int num_categories, int neighbors) {
  const Index n = reference_features.rows();
  if (n == 0) throw InsufficientDataError("pseudo_label_knn: empty reference set");
  VoteResult out;
  out.shortfall = n < neighbors;
  const VectorXd sims = reference_features * query;
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  const Index k = std::min<Index>(neighbors, n);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](Index a, Index b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); });
  out.distribution = VectorXd::Zero(num_categories);
  for (Index j = 0; j < k; ++j) out.distribution[reference_labels[order[j]]] += 1.0;
  out.distribution /= static_cast<double>(k);
  return out;
}

}  // namespace neat::ncl
