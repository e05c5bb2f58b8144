#pragma once

// Two-phase training loop: frozen-model noise detection, then split-conditioned model
// updating with cross entropy on estimated-clean instances plus the contrastive regularizer.

#include "neat/dataset.hpp"
#include "neat/eval.hpp"
#include "neat/model.hpp"
#include "neat/ncl.hpp"
#include "neat/trunc.hpp"

#include <functional>
#include <optional>

namespace neat::train {

struct TrainConfig {
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<int> lr_decay_epochs;  // multiply the rate by lr_decay at each listed epoch
  double lr_decay = 0.1;
  int warmup_epochs = 10;
  double max_grad_norm = 0.0;  // rescale the step gradient to this global L2 norm; 0 disables

  int b = 200;
  double xi = trunc::kDefaultThreshold;
  trunc::ScoreMode score_mode = trunc::ScoreMode::var;
  trunc::CtMode ct_mode = trunc::CtMode::ct;
  trunc::Slice slice = trunc::Slice::top;
  bool kmeans_init = false;
  int anchors_per_category = 10;

  double temperature = ncl::kDefaultTemperature;
  int neighbors = ncl::kDefaultNeighbors;
  ncl::Strategy strategy = ncl::Strategy::ncl;
  bool open_set_mode = false;
  double lambda_r = 1.0;
  bool contrastive_warmup = false;  // also apply the regularizer during warm-up (all-clean split)

  int hidden_dim = 64;
  int embed_dim = 64;
  int proj_dim = 128;
  model::Activation activation = model::Activation::tanh;

  std::uint64_t seed = 1;

  void validate() const;
  ncl::ContrastiveConfig contrastive() const;
  trunc::DetectionConfig detection() const;
  model::Architecture architecture(int input_dim, int num_categories) const;
};

/// The two clips of one instance used during model updating.
struct ViewPair {
  RowMatrixXd first;
  RowMatrixXd second;
};

/// Two disjoint random subsets of T/2 frames when T >= 4, otherwise all frames with two
/// independent N(0, 0.05^2) jitter draws (renormalized). Pure function of
/// (seed, epoch, instance).
ViewPair make_views(const Dataset& data, Index instance, std::uint64_t seed, int epoch);

/// Deterministic epoch shuffle of [0, m).
std::vector<Index> epoch_order(Index m, std::uint64_t seed, int epoch);

/// One minibatch: stacked first / second views, targets and flags.
struct Batch {
  RowMatrixXd first;   // n * g1 rows
  RowMatrixXd second;  // n * g2 rows
  Index first_group = 0;
  Index second_group = 0;
  RowMatrixXd targets;                // n x K label distributions
  std::vector<std::uint8_t> supervised;  // CE applies
  std::vector<ncl::KeyMeta> meta;     // annotated label, clean flag, id
};

struct StepResult {
  double ce_loss = 0.0;
  double ncl_loss = 0.0;
  double total = 0.0;
  Index supervised = 0;
  model::Parameters grad;
  std::vector<ncl::ProjectedKey> keys;  // second views, to enqueue afterwards
  std::vector<std::string> warnings;
};

/// Loss and gradient of one minibatch. Bank keys and the batch's second-view keys are
/// constants. With `contrastive` false the regularizer is not evaluated.
StepResult compute_step(const model::ModelState& state, const Batch& batch, const ncl::MemoryBank& bank,
                        const ncl::ContrastiveConfig& config, bool contrastive);

/// SGD with momentum; weight decay on weight matrices only.
void sgd_update(model::ModelState& state, const model::Parameters& grad, double learning_rate, double momentum,
                double weight_decay);

struct EpochLosses {
  double ce_loss = 0.0;
  double ncl_loss = 0.0;
  Index batches = 0;
  std::vector<std::string> warnings;
};

/// Model-updating phase for one epoch. `targets` (M x K) overrides the one-hot labels of
/// estimated-noisy instances for the pseudo-label strategies.
EpochLosses train_epoch(const Dataset& data, const trunc::SplitEstimate& split, model::ModelState& state,
                        ncl::MemoryBank& bank, const TrainConfig& config, int epoch, bool warmup,
                        const RowMatrixXd* targets = nullptr);

/// Pseudo-label targets for the estimated-noisy instances (rows of clean ones are one-hot).
RowMatrixXd pseudo_targets(const model::Embedding& embedding, std::span<const int> labels,
                           const trunc::SplitEstimate& split, int num_categories, ncl::Strategy strategy,
                           std::vector<std::string>* warnings = nullptr);

struct RunHooks {
  std::function<void(const eval::EpochMetrics&)> on_epoch;
  /// Called after each detection phase with the frozen features and the context it used.
  std::function<void(int epoch, const FeatureSet&, const trunc::DetectionContext&, const trunc::SplitEstimate&)>
      on_detection;
};

struct RunResult {
  std::vector<eval::EpochMetrics> history;
  model::ModelState state;
  trunc::SplitEstimate split;
  std::vector<std::string> warnings;
};

/// Runs `config.epochs` rounds of detection + updating. `initial` overrides the freshly
/// initialized model. Throws NumericError on a non-finite loss or parameter.
RunResult run(const Dataset& train, const Dataset* test, const TrainConfig& config, const RunHooks& hooks = {},
              std::optional<model::ModelState> initial = std::nullopt);

/// Detection round used by run(); exposed for the detect command and tests.
trunc::SplitEstimate detect(const FeatureSet& features, const Dataset& data, const TrainConfig& config,
                            const trunc::DetectionContext& context);

}  // namespace neat::train
