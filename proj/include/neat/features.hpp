#pragma once

#include "neat/common.hpp"
#include "neat/dataset.hpp"

namespace neat {

/// Frozen per-frame features v_t and clip embeddings x = normalize(mean_t v_t) for a dataset.
struct FeatureSet {
  Index frames = 0;
  RowMatrixXd frame_features;  // (M*T) x d, unit rows
  RowMatrixXd clips;           // M x d, unit rows

  Index size() const { return clips.rows(); }
  Index dim() const { return clips.cols(); }
  auto frames_of(Index i) const { return frame_features.middleRows(i * frames, frames); }
};

/// Identity-encoder features: the dataset's frames as-is, averaged into clips.
FeatureSet identity_features(const Dataset& data);

/// Clip rows normalize(mean of each group of `frames` rows).
RowMatrixXd consensus(const RowMatrixXd& frame_features, Index frames);

}  // namespace neat
