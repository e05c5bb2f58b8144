#include "neat/trainer.hpp"
#include "neat/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace neat::train {

namespace {

constexpr std::uint64_t kStreamShuffle = 0x5348;
constexpr std::uint64_t kStreamViews = 0x5649;
constexpr std::uint64_t kStreamInit = 0x494E;
constexpr std::uint64_t kStreamKmeans = 0x4B4D;
constexpr double kViewJitter = 0.05;

double scheduled_rate(const TrainConfig& config, int epoch) {
  double rate = config.learning_rate;
  for (int e : config.lr_decay_epochs) {
    if (epoch > e) rate *= config.lr_decay;
  }
  return rate;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
  if (warmup_epochs < 1) throw ConfigError("warmup_epochs must be at least 1");
  if (max_grad_norm < 0.0) throw ConfigError("max_grad_norm must be nonnegative");
  if (b < 1) throw ConfigError("b must be positive");
  if (!(xi > 0.0 && xi <= 1.0)) throw ConfigError("xi must lie in (0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (neighbors < 1) throw ConfigError("neighbors must be positive");
  if (lambda_r < 0.0) throw ConfigError("lambda_r must be nonnegative");
  if (hidden_dim < 1 || embed_dim < 1 || proj_dim < 1) throw ConfigError("model dimensions must be positive");
  if (anchors_per_category < 1) throw ConfigError("anchors_per_category must be positive");
}

ncl::ContrastiveConfig TrainConfig::contrastive() const {
  ncl::ContrastiveConfig c;
  c.temperature = temperature;
  c.neighbors = neighbors;
  c.strategy = strategy;
  c.open_set_mode = open_set_mode;
  c.lambda_r = lambda_r;
  return c;
}

trunc::DetectionConfig TrainConfig::detection() const {
  trunc::DetectionConfig d;
  d.b = b;
  d.mode = score_mode;
  d.threshold = xi;
  d.ct_mode = ct_mode;
  d.slice = slice;
  return d;
}

model::Architecture TrainConfig::architecture(int input_dim, int num_categories) const {
  model::Architecture a;
  a.input_dim = input_dim;
  a.hidden_dim = hidden_dim;
  a.embed_dim = embed_dim;
  a.proj_dim = proj_dim;
  a.num_categories = num_categories;
  a.activation = activation;
  return a;
}

ViewPair make_views(const Dataset& data, Index instance, std::uint64_t seed, int epoch) {
  CounterRng rng(derive_seed(derive_seed(seed, kStreamViews + static_cast<std::uint64_t>(epoch)),
                             static_cast<std::uint64_t>(instance)));
  const auto frames = data.frames_of(instance);
  const Index t = data.frames;
  ViewPair views;
  if (t >= 4) {
    std::vector<Index> order(t);
    std::iota(order.begin(), order.end(), Index{0});
    rng.shuffle(order.begin(), order.end());
    const Index half = t / 2;
    std::sort(order.begin(), order.begin() + half);
    std::sort(order.begin() + half, order.begin() + 2 * half);
    views.first.resize(half, data.dim);
    views.second.resize(half, data.dim);
    for (Index j = 0; j < half; ++j) {
      views.first.row(j) = frames.row(order[j]).cast<double>();
      views.second.row(j) = frames.row(order[half + j]).cast<double>();
    }
  } else {
    views.first = frames.cast<double>();
    views.second = views.first;
    for (RowMatrixXd* view : {&views.first, &views.second}) {
      for (Index r = 0; r < t; ++r) {
        for (Index c = 0; c < data.dim; ++c) (*view)(r, c) += kViewJitter * rng.normal();
        auto row = view->row(r);
        normalize_or_uniform(row);
      }
    }
  }
  return views;
}

std::vector<Index> epoch_order(Index m, std::uint64_t seed, int epoch) {
  std::vector<Index> order(m);
  std::iota(order.begin(), order.end(), Index{0});
  CounterRng rng(derive_seed(seed, kStreamShuffle + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order.begin(), order.end());
  return order;
}

StepResult compute_step(const model::ModelState& state, const Batch& batch, const ncl::MemoryBank& bank,
                        const ncl::ContrastiveConfig& config, bool contrastive) {
  const Index n = static_cast<Index>(batch.meta.size());
  const model::ForwardCache first = model::forward(state, batch.first, batch.first_group);
  const model::ForwardCache second = model::forward(state, batch.second, batch.second_group);

  StepResult out;
  RowMatrixXd d_logits = RowMatrixXd::Zero(n, state.arch.num_categories);
  for (Index i = 0; i < n; ++i) out.supervised += batch.supervised[i] ? 1 : 0;
  if (out.supervised > 0) {
    for (Index i = 0; i < n; ++i) {
      if (!batch.supervised[i]) continue;
      const auto ce = model::cross_entropy(first.logits.row(i).transpose(), batch.targets.row(i).transpose());
      out.ce_loss += ce.loss;
      d_logits.row(i) = ce.grad.transpose();
    }
    out.ce_loss /= static_cast<double>(out.supervised);
    d_logits /= static_cast<double>(out.supervised);
  }

  RowMatrixXd d_z = RowMatrixXd::Zero(n, state.arch.proj_dim);
  if (contrastive) {
    ncl::KeyPool pool;
    pool.bank_size = bank.size();
    pool.z.resize(bank.size() + n, state.arch.proj_dim);
    pool.meta.reserve(bank.size() + n);
    for (Index k = 0; k < bank.size(); ++k) {
      pool.z.row(k) = bank[k].z.transpose();
      pool.meta.push_back(bank[k].meta);
    }
    pool.z.bottomRows(n) = second.z;
    std::vector<ncl::Query> queries(n);
    for (Index i = 0; i < n; ++i) {
      pool.meta.push_back(batch.meta[i]);
      queries[i].z = first.z.row(i).transpose();
      queries[i].meta = batch.meta[i];
      queries[i].second_view = bank.size() + i;
    }
    ncl::BatchLoss reg = ncl::batch_loss(queries, pool, config);
    out.ncl_loss = reg.loss;
    d_z = std::move(reg.grad);
    out.warnings = std::move(reg.warnings);
  }

  out.total = out.ce_loss + out.ncl_loss;
  out.grad = model::backward(state, first, d_logits, d_z);
  out.keys.reserve(n);
  for (Index i = 0; i < n; ++i) out.keys.push_back({second.z.row(i).transpose(), batch.meta[i]});
  return out;
}

void sgd_update(model::ModelState& state, const model::Parameters& grad, double learning_rate, double momentum,
                double weight_decay) {
  for (int s = 0; s < model::Parameters::kCount; ++s) {
    Eigen::MatrixXd step = grad.tensors[s];
    if (!model::Parameters::is_bias(s)) step += weight_decay * state.params.tensors[s];
    state.momentum.tensors[s] = momentum * state.momentum.tensors[s] + step;
    state.params.tensors[s] -= learning_rate * state.momentum.tensors[s];
  }
}

EpochLosses train_epoch(const Dataset& data, const trunc::SplitEstimate& split, model::ModelState& state,
                        ncl::MemoryBank& bank, const TrainConfig& config, int epoch, bool warmup,
                        const RowMatrixXd* targets) {
  const Index m = data.size();
  if (static_cast<Index>(split.clean_mask.size()) != m) throw ContractViolation("train_epoch: split size mismatch");
  const int k = data.num_categories;
  const bool pseudo = ncl::is_pseudo_label(config.strategy) && targets != nullptr && !warmup;
  const bool contrastive = ncl::is_contrastive(config.strategy) && (!warmup || config.contrastive_warmup);
  const ncl::ContrastiveConfig ccfg = config.contrastive();
  const double rate = scheduled_rate(config, epoch);
  const std::vector<Index> order = epoch_order(m, config.seed, epoch);

  EpochLosses losses;
  for (Index begin = 0; begin < m; begin += config.batch_size) {
    const Index n = std::min<Index>(config.batch_size, m - begin);
    Batch batch;
    batch.targets = RowMatrixXd::Zero(n, k);
    batch.supervised.assign(n, 0);
    batch.meta.resize(n);
    for (Index j = 0; j < n; ++j) {
      const Index id = order[begin + j];
      ViewPair views = make_views(data, id, config.seed, epoch);
      if (j == 0) {
        batch.first_group = views.first.rows();
        batch.second_group = views.second.rows();
        batch.first.resize(n * batch.first_group, data.dim);
        batch.second.resize(n * batch.second_group, data.dim);
      }
      batch.first.middleRows(j * batch.first_group, batch.first_group) = views.first;
      batch.second.middleRows(j * batch.second_group, batch.second_group) = views.second;
      const bool clean = split.clean_mask[id] != 0;
      batch.meta[j] = {data.noisy_label[id], clean, id};
      if (pseudo && !clean) {
        batch.targets.row(j) = targets->row(id);
        batch.supervised[j] = 1;
      } else {
        batch.targets(j, data.noisy_label[id]) = 1.0;
        batch.supervised[j] = clean ? 1 : 0;
      }
    }

    StepResult step = compute_step(state, batch, bank, ccfg, contrastive);
    if (!std::isfinite(step.total) || !step.grad.all_finite()) {
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(begin / config.batch_size));
    }
    if (config.max_grad_norm > 0.0) {
      double squared = 0.0;
      for (const auto& t : step.grad.tensors) squared += t.squaredNorm();
      const double norm = std::sqrt(squared);
      if (norm > config.max_grad_norm) {
        for (auto& t : step.grad.tensors) t *= config.max_grad_norm / norm;
      }
    }
    sgd_update(state, step.grad, rate, config.momentum, config.weight_decay);
    if (!state.params.all_finite()) throw NumericError("non-finite parameters at epoch " + std::to_string(epoch));
    ncl::enqueue(bank, step.keys);

    losses.ce_loss += step.ce_loss;
    losses.ncl_loss += step.ncl_loss;
    ++losses.batches;
    for (auto& w : step.warnings) losses.warnings.push_back(std::move(w));
  }
  if (losses.batches) {
    losses.ce_loss /= static_cast<double>(losses.batches);
    losses.ncl_loss /= static_cast<double>(losses.batches);
  }
  return losses;
}

RowMatrixXd pseudo_targets(const model::Embedding& embedding, std::span<const int> labels,
                           const trunc::SplitEstimate& split, int num_categories, ncl::Strategy strategy,
                           std::vector<std::string>* warnings) {
  const Index m = static_cast<Index>(labels.size());
  RowMatrixXd targets = RowMatrixXd::Zero(m, num_categories);

  RowMatrixXd reference;
  std::vector<int> reference_labels;
  if (strategy == ncl::Strategy::pl_k) {
    std::vector<Index> ids;
    for (const auto& members : split.next_omega) ids.insert(ids.end(), members.begin(), members.end());
    std::sort(ids.begin(), ids.end());
    reference = embedding.features.clips(ids, Eigen::all);
    for (Index id : ids) reference_labels.push_back(labels[id]);
    if (warnings && static_cast<int>(ids.size()) < ncl::kPseudoLabelNeighbors) {
      warnings->push_back("reference set smaller than " + std::to_string(ncl::kPseudoLabelNeighbors) +
                          ", voting over all of it");
    }
  }

  for (Index i = 0; i < m; ++i) {
    if (split.clean_mask[i]) {
      targets(i, labels[i]) = 1.0;
      continue;
    }
    switch (strategy) {
      case ncl::Strategy::pl_h:
        targets.row(i) = ncl::pseudo_label_hard(model::softmax(embedding.logits.row(i).transpose())).transpose();
        break;
      case ncl::Strategy::pl_s:
        targets.row(i) = ncl::pseudo_label_soft(model::softmax(embedding.logits.row(i).transpose())).transpose();
        break;
      case ncl::Strategy::pl_k:
        if (reference.rows() == 0) {
          targets(i, labels[i]) = 1.0;
        } else {
          targets.row(i) = ncl::pseudo_label_knn(embedding.features.clips.row(i).transpose(), reference,
                                                 reference_labels, num_categories)
                               .distribution.transpose();
        }
        break;
      default:
        targets(i, labels[i]) = 1.0;
        break;
    }
  }
  return targets;
}

trunc::SplitEstimate detect(const FeatureSet& features, const Dataset& data, const TrainConfig& config,
                            const trunc::DetectionContext& context) {
  trunc::DetectionConfig dcfg = config.detection();
  if (dcfg.ct_mode == trunc::CtMode::ct_all) dcfg.b = static_cast<int>(features.dim());
  return trunc::split(features, data.noisy_label, data.num_categories, dcfg, context);
}

RunResult run(const Dataset& train, const Dataset* test, const TrainConfig& config, const RunHooks& hooks,
              std::optional<model::ModelState> initial) {
  config.validate();
  if (config.ct_mode != trunc::CtMode::ct_all && config.b > config.embed_dim) {
    throw ConfigError("b=" + std::to_string(config.b) + " exceeds embed_dim=" + std::to_string(config.embed_dim));
  }
  const int k = train.num_categories;
  const model::Architecture arch = config.architecture(train.dim, k);

  RunResult result;
  result.state = initial ? std::move(*initial) : model::init_model(arch, derive_seed(config.seed, kStreamInit));
  model::ModelState& state = result.state;
  if (state.params[model::Parameters::kW1].cols() != train.dim ||
      state.params[model::Parameters::kWg].rows() != k) {
    throw ConfigError("initial model does not match the dataset dimensions");
  }
  ncl::MemoryBank bank(ncl::MemoryBank::capacity_for(k));

  const Mask truth = train.true_clean();
  const trunc::ReferenceSet anchors =
      trunc::anchor_reference(train.noisy_label, truth, k, config.anchors_per_category);
  trunc::SplitEstimate previous = trunc::all_clean(train.noisy_label, k);
  bool first_detection = true;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const bool warmup = epoch <= config.warmup_epochs;

    // Noise detection phase on the frozen model.
    trunc::SplitEstimate split;
    std::optional<model::Embedding> embedding;
    if (warmup) {
      split = trunc::all_clean(train.noisy_label, k);
    } else {
      embedding = model::embed(state, train);
      const bool oracle = config.ct_mode == trunc::CtMode::ct_oracle;
      trunc::DetectionContext context = trunc::next_context(previous, oracle ? truth : Mask{});
      if (config.ct_mode == trunc::CtMode::ct_star) {
        context.omega = anchors;
      } else if (first_detection && config.kmeans_init) {
        for (int a = 0; a < k; ++a) {
          context.omega[a] = trunc::kmeans_init_omega(embedding->features, train.noisy_label, a,
                                                      derive_seed(config.seed, kStreamKmeans));
        }
      }
      split = detect(embedding->features, train, config, context);
      first_detection = false;
      if (hooks.on_detection) hooks.on_detection(epoch, embedding->features, context, split);
      for (auto& w : split.warnings) result.warnings.push_back("epoch " + std::to_string(epoch) + ": " + w);
    }

    // Model updating phase.
    RowMatrixXd targets;
    if (!warmup && ncl::is_pseudo_label(config.strategy)) {
      targets = pseudo_targets(*embedding, train.noisy_label, split, k, config.strategy, &result.warnings);
    }
    EpochLosses losses =
        train_epoch(train, split, state, bank, config, epoch, warmup, targets.size() ? &targets : nullptr);
    for (auto& w : losses.warnings) result.warnings.push_back("epoch " + std::to_string(epoch) + ": " + w);

    eval::EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.ce_loss = losses.ce_loss;
    metrics.ncl_loss = losses.ncl_loss;
    const eval::Detection det = eval::detection_metrics(split.clean_mask, truth);
    metrics.detection_precision = det.precision;
    metrics.detection_recall = det.recall;
    metrics.detection_f1 = det.f1;
    metrics.estimated_clean_count = split.clean_count();
    if (test) {
      const model::Embedding test_embedding = model::embed(state, *test);
      metrics.test_accuracy = model::accuracy(test_embedding.logits, test->true_label);
    }
    metrics.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(metrics);
    if (hooks.on_epoch) hooks.on_epoch(metrics);
    previous = std::move(split);
  }
  result.split = std::move(previous);
  return result;
}

}  // namespace neat::train
