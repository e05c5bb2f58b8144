#pragma once

// Frame encoder f (two affine layers with an elementwise nonlinearity, shared across
// frames), temporal consensus G, classifier head g, projection head h, and their analytic
// gradients.

#include "neat/common.hpp"
#include "neat/dataset.hpp"
#include "neat/features.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string_view>

namespace neat::model {

enum class Activation { tanh, linear };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct Architecture {
  int input_dim = 64;
  int hidden_dim = 64;
  int embed_dim = 64;
  int proj_dim = 128;
  int num_categories = 10;
  Activation activation = Activation::tanh;
};

/// Parameter tensors in checkpoint order. Biases are column vectors stored as n x 1.
struct Parameters {
  enum Slot { kW1, kB1, kW2, kB2, kWg, kBg, kWh, kBh, kCount };
  std::array<Eigen::MatrixXd, kCount> tensors;

  Eigen::MatrixXd& operator[](Slot s) { return tensors[s]; }
  const Eigen::MatrixXd& operator[](Slot s) const { return tensors[s]; }

  static Parameters zeros_like(const Parameters& other);
  Index count() const;
  bool all_finite() const;
  /// FNV-1a over the raw bytes; equal hashes mean bit-identical parameters.
  std::uint64_t hash() const;
  static bool is_bias(int slot) { return slot % 2 == 1; }
};

struct ModelState {
  Architecture arch;
  Parameters params;
  Parameters momentum;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
ModelState init_model(const Architecture& arch, std::uint64_t seed);

/// Linear activation with identity W1 and W2; requires input = hidden = embed dims.
ModelState identity_encoder(const Architecture& arch, std::uint64_t seed);

/// Intermediates of a batched forward pass. Rows of `frames` are grouped `group` at a time
/// into clips.
struct ForwardCache {
  Index group = 0;
  RowMatrixXd input;       // N x d_in
  RowMatrixXd hidden;      // N x h, after activation
  RowMatrixXd pre_hidden;  // N x h
  VectorXd frame_norm;     // N
  RowMatrixXd frames;      // N x d, unit rows (v_t)
  VectorXd clip_norm;      // n
  RowMatrixXd clips;       // n x d, unit rows (x)
  RowMatrixXd logits;      // n x K
  VectorXd proj_norm;      // n
  RowMatrixXd z;           // n x d_hat, unit rows
};

ForwardCache forward(const ModelState& state, RowMatrixXd input, Index group);

/// Accumulated parameter gradients for upstream d loss / d logits and d loss / d z.
Parameters backward(const ModelState& state, const ForwardCache& cache, const RowMatrixXd& d_logits,
                    const RowMatrixXd& d_z);

/// Softmax cross entropy against a label distribution, stabilized with the max logit.
struct CrossEntropy {
  double loss = 0.0;
  VectorXd grad;  // softmax - y
};

template <typename DerivedL, typename DerivedY>
CrossEntropy cross_entropy(const Eigen::MatrixBase<DerivedL>& logits, const Eigen::MatrixBase<DerivedY>& target) {
  const double peak = logits.maxCoeff();
  const VectorXd shifted = (logits.array() - peak).matrix();
  const double lse = std::log(shifted.array().exp().sum());
  const VectorXd log_softmax = shifted.array() - lse;
  CrossEntropy out;
  out.loss = -target.dot(log_softmax);
  out.grad = log_softmax.array().exp().matrix() - target;
  return out;
}

template <typename Derived>
VectorXd softmax(const Eigen::MatrixBase<Derived>& logits) {
  const VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

/// Frozen embedding of every instance with all frames: per-frame v_t, clips x, logits.
struct Embedding {
  FeatureSet features;
  RowMatrixXd logits;
};

Embedding embed(const ModelState& state, const Dataset& data, Index chunk = 256);

/// Fraction of instances whose argmax logit equals its reference label (open-set skipped).
double accuracy(const RowMatrixXd& logits, std::span<const int> labels);

// Checkpoint: "NEAM" magic, u32 version, u32 tensor count, then per tensor u32 rows,
// u32 cols and row-major float32 data, all little-endian. Momentum is not stored.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
/// Loads tensors into a state shaped by `arch`; throws ConfigError on shape mismatch.
ModelState load_checkpoint(const Architecture& arch, const std::filesystem::path& path);

}  // namespace neat::model
