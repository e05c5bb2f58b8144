#pragma once

#include "neat/common.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace neat {

/// Parameters of the synthetic multi-frame embedding generator.
struct GenSpec {
  int num_categories = 10;
  int instances_per_category = 100;
  int frames = 8;
  int dim = 64;
  int planted_channels_per_category = 8;
  double scene_strength = 1.0;
  double motion_strength = 1.0;
  double distractor_strength = 0.15;
  double noise_sigma = 0.3;
  std::uint64_t seed = 1;
};

/// First channel of each category's planted window plus the scene/motion split inside it.
///
/// Windows are disjoint (stride = planted) whenever K * planted <= dim. Otherwise they are
/// spread with stride floor((dim - planted) / (K - 1)), so neighbouring categories share
/// some channels; every category still owns a distinct window.
struct ChannelLayout {
  int planted = 0;
  int scene = 0;  // first `scene` channels of a window carry the frame-constant signal
  std::vector<int> window_start;

  std::vector<int> channels(int category) const;
  bool disjoint() const;
};

ChannelLayout channel_layout(const GenSpec& spec);

constexpr int kOpenSetLabel = -1;

/// M instances x T frames x d channels, each frame unit-normalized.
struct Dataset {
  int num_categories = 0;  // K
  int frames = 0;          // T
  int dim = 0;             // d
  RowMatrixXf features;    // (M*T) x d, instance-major then frame-major
  std::vector<int> noisy_label;
  std::vector<int> true_label;  // kOpenSetLabel for open-set instances
  Mask open_set;

  Index size() const { return static_cast<Index>(noisy_label.size()); }
  auto frames_of(Index i) const { return features.middleRows(i * frames, frames); }
  auto frames_of(Index i) { return features.middleRows(i * frames, frames); }

  /// Ground-truth clean mask: annotation matches the true in-set category.
  Mask true_clean() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset generate(const GenSpec& spec);

enum class NoiseKind { symmetric, asymmetric, open_set_symmetric, open_set_asymmetric };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double ratio = 0.0;
  std::optional<std::vector<int>> pair_map;
  std::uint64_t seed = 1;
};

/// Adjacent-index 2-cycles; the last three categories form a 3-cycle when K is odd.
std::vector<int> default_pair_map(int num_categories);

/// Throws ConfigError unless `map` is a fixed-point-free permutation made of 2-cycles
/// plus at most one 3-cycle (odd K only).
void validate_pair_map(const std::vector<int>& map, int num_categories);

/// Flips exactly floor(ratio * M_k) instances of every true category k. Open-set kinds
/// replace the selected instances' frames with instances of categories outside the label
/// set, generated from `gen` (needed for its strengths and layout).
Dataset inject_noise(const Dataset& data, const NoiseSpec& noise, const GenSpec& gen);

/// Instances whose annotation was changed or whose content was replaced.
struct NoiseReport {
  std::vector<int> flipped_per_category;
  std::vector<int> open_set_per_category;
  Index total_noisy = 0;
};

NoiseReport noise_report(const Dataset& data);

// "neatds v1" binary file.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace neat
