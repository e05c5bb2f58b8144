#include "neat/features.hpp"

namespace neat {

RowMatrixXd consensus(const RowMatrixXd& frame_features, Index frames) {
  const Index m = frame_features.rows() / frames;
  RowMatrixXd clips(m, frame_features.cols());
  for (Index i = 0; i < m; ++i) {
    clips.row(i) = frame_features.middleRows(i * frames, frames).colwise().mean();
    auto row = clips.row(i);
    normalize_or_uniform(row);
  }
  return clips;
}

FeatureSet identity_features(const Dataset& data) {
  FeatureSet set;
  set.frames = data.frames;
  set.frame_features = data.features.cast<double>();
  set.clips = consensus(set.frame_features, set.frames);
  return set;
}

}  // namespace neat
