#include "neat/dataset.hpp"
#include "neat/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace neat {

namespace {

constexpr std::uint64_t kStreamInstance = 0x1000;
constexpr std::uint64_t kStreamNoiseCategory = 0x2000;
constexpr std::uint64_t kStreamOpenSet = 0x3000;

// Per-frame generation of one instance whose planted window starts at `start`.
//
// Raw value of channel c in frame t, with g ~ U(0.5, 1.5) a per-instance salience gain:
//   scene channel   s * g
//   motion channel  m * g * (0.3 + sin(2 pi t / T + phase_c))
//   other channel   static nuisance d * |n_c| on even c, dynamic nuisance d * n_{t,c} on odd c
// then every value is multiplied by (1 + sigma * e_{t,c}) and each frame is L2-normalized.
void fill_instance(const GenSpec& spec, const ChannelLayout& layout, int start, std::uint64_t key,
                   Eigen::Ref<RowMatrixXf> out) {
  CounterRng rng(key);
  const int frames = spec.frames;
  const int dim = spec.dim;
  const double gain = rng.uniform(0.5, 1.5);

  std::vector<double> phase(layout.planted);
  for (auto& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<double> static_nuisance(dim);
  for (auto& v : static_nuisance) v = std::abs(rng.normal());

  RowMatrixXd raw(frames, dim);
  for (int t = 0; t < frames; ++t) {
    const double angle = 2.0 * std::numbers::pi * t / frames;
    for (int c = 0; c < dim; ++c) {
      const int offset = c - start;
      double value;
      if (offset >= 0 && offset < layout.planted) {
        if (offset < layout.scene) {
          value = spec.scene_strength * gain;
        } else {
          value = spec.motion_strength * gain * (0.3 + std::sin(angle + phase[offset]));
        }
      } else if (c % 2 == 0) {
        value = spec.distractor_strength * static_nuisance[c];
      } else {
        value = spec.distractor_strength * rng.normal();
      }
      raw(t, c) = value * (1.0 + spec.noise_sigma * rng.normal());
    }
    auto row = raw.row(t);
    normalize_or_uniform(row);
  }
  out = raw.cast<float>();
}

void check_spec(const GenSpec& spec) {
  if (spec.num_categories < 1 || spec.instances_per_category < 1 || spec.frames < 1 || spec.dim < 1 ||
      spec.planted_channels_per_category < 1) {
    throw ConfigError("generator dimensions must be positive");
  }
  if (spec.planted_channels_per_category > spec.dim) {
    throw ConfigError("planted_channels_per_category exceeds dim");
  }
  if (spec.scene_strength < 0 || spec.motion_strength < 0 || spec.distractor_strength < 0 ||
      spec.noise_sigma < 0) {
    throw ConfigError("generator strengths must be nonnegative");
  }
}

}  // namespace

std::vector<int> ChannelLayout::channels(int category) const {
  std::vector<int> out(planted);
  std::iota(out.begin(), out.end(), window_start.at(category));
  return out;
}

bool ChannelLayout::disjoint() const {
  for (std::size_t k = 1; k < window_start.size(); ++k) {
    if (window_start[k] - window_start[k - 1] < planted) return false;
  }
  return true;
}

ChannelLayout channel_layout(const GenSpec& spec) {
  check_spec(spec);
  const int k = spec.num_categories;
  const int p = spec.planted_channels_per_category;
  int stride = p;
  if (static_cast<long>(k) * p > spec.dim) {
    stride = k > 1 ? (spec.dim - p) / (k - 1) : 0;
    if (stride < 1) {
      throw ConfigError("dimension overflow: cannot place distinct planted windows for every category");
    }
  }
  ChannelLayout layout;
  layout.planted = p;
  layout.scene = p / 2;
  layout.window_start.resize(k);
  for (int c = 0; c < k; ++c) layout.window_start[c] = c * stride;
  return layout;
}

Mask Dataset::true_clean() const {
  Mask clean(noisy_label.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    clean[i] = !open_set[i] && true_label[i] == noisy_label[i];
  }
  return clean;
}

Dataset generate(const GenSpec& spec) {
  const ChannelLayout layout = channel_layout(spec);
  const Index per = spec.instances_per_category;
  const Index m = per * spec.num_categories;

  Dataset data;
  data.num_categories = spec.num_categories;
  data.frames = spec.frames;
  data.dim = spec.dim;
  data.features.resize(m * spec.frames, spec.dim);
  data.noisy_label.resize(m);
  data.true_label.resize(m);
  data.open_set.assign(m, 0);

  parallel_for(spec.num_categories, [&](Index k) {
    const std::uint64_t category_key = derive_seed(spec.seed, kStreamInstance + k);
    for (Index j = 0; j < per; ++j) {
      const Index i = k * per + j;
      fill_instance(spec, layout, layout.window_start[k], derive_seed(category_key, j), data.frames_of(i));
      data.noisy_label[i] = static_cast<int>(k);
      data.true_label[i] = static_cast<int>(k);
    }
  });
  return data;
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::asymmetric: return "asymmetric";
    case NoiseKind::open_set_symmetric: return "open_set_symmetric";
    case NoiseKind::open_set_asymmetric: return "open_set_asymmetric";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
  for (auto kind : {NoiseKind::symmetric, NoiseKind::asymmetric, NoiseKind::open_set_symmetric,
                    NoiseKind::open_set_asymmetric}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown noise kind: " + std::string(name));
}

std::vector<int> default_pair_map(int num_categories) {
  if (num_categories < 2) throw ConfigError("asymmetric noise needs at least two categories");
  std::vector<int> map(num_categories);
  int c = 0;
  const int paired_end = num_categories % 2 == 0 ? num_categories : num_categories - 3;
  for (; c < paired_end; c += 2) {
    map[c] = c + 1;
    map[c + 1] = c;
  }
  if (c < num_categories) {
    map[c] = c + 1;
    map[c + 1] = c + 2;
    map[c + 2] = c;
  }
  return map;
}

void validate_pair_map(const std::vector<int>& map, int num_categories) {
  if (static_cast<int>(map.size()) != num_categories) throw ConfigError("pair_map size must equal K");
  std::vector<int> seen(num_categories, 0);
  for (int c = 0; c < num_categories; ++c) {
    if (map[c] < 0 || map[c] >= num_categories) throw ConfigError("pair_map entry out of range");
    if (map[c] == c) throw ConfigError("pair_map has a fixed point");
    if (seen[map[c]]++) throw ConfigError("pair_map is not a permutation");
  }
  int three_cycles = 0;
  std::vector<int> visited(num_categories, 0);
  for (int c = 0; c < num_categories; ++c) {
    if (visited[c]) continue;
    int length = 0;
    for (int j = c; !visited[j]; j = map[j]) {
      visited[j] = 1;
      ++length;
    }
    if (length == 3) {
      ++three_cycles;
    } else if (length != 2) {
      throw ConfigError("pair_map cycles must have length 2 (or one of length 3)");
    }
  }
  if (three_cycles > (num_categories % 2)) throw ConfigError("pair_map may hold a 3-cycle only for odd K");
}

Dataset inject_noise(const Dataset& data, const NoiseSpec& noise, const GenSpec& gen) {
  if (!(noise.ratio >= 0.0 && noise.ratio < 1.0)) throw ConfigError("noise ratio must lie in [0, 1)");
  const int k_count = data.num_categories;
  std::vector<int> pair_map;
  const bool asymmetric = noise.kind == NoiseKind::asymmetric || noise.kind == NoiseKind::open_set_asymmetric;
  if (noise.kind == NoiseKind::asymmetric) {
    if (!noise.pair_map) throw ConfigError("asymmetric noise requires pair_map");
    validate_pair_map(*noise.pair_map, k_count);
    pair_map = *noise.pair_map;
  }
  const bool open_set = noise.kind == NoiseKind::open_set_symmetric || noise.kind == NoiseKind::open_set_asymmetric;
  if (open_set && (gen.frames != data.frames || gen.dim != data.dim)) {
    throw ConfigError("open-set noise: generator spec does not match dataset dims");
  }

  Dataset out = data;
  if (noise.ratio == 0.0) return out;

  std::vector<std::vector<Index>> members(k_count);
  for (Index i = 0; i < data.size(); ++i) {
    if (data.true_label[i] >= 0) members[data.true_label[i]].push_back(i);
  }

  ChannelLayout layout;
  if (open_set) layout = channel_layout(gen);
  const int max_start = data.dim - (open_set ? layout.planted : 0);

  for (int c = 0; c < k_count; ++c) {
    auto ids = members[c];
    const auto flips = static_cast<std::size_t>(std::floor(noise.ratio * static_cast<double>(ids.size())));
    CounterRng rng(derive_seed(noise.seed, kStreamNoiseCategory + c));
    rng.shuffle(ids.begin(), ids.end());
    std::sort(ids.begin(), ids.begin() + flips);
    for (std::size_t n = 0; n < flips; ++n) {
      const Index i = ids[n];
      if (open_set) {
        // Open category j sits half a window to the right of in-set category j.
        const int open_category = asymmetric ? c : static_cast<int>(rng.below(k_count));
        const int start = std::min(layout.window_start[open_category] + std::max(1, layout.planted / 2), max_start);
        fill_instance(gen, layout, start, derive_seed(noise.seed, kStreamOpenSet + static_cast<std::uint64_t>(i)),
                      out.frames_of(i));
        out.open_set[i] = 1;
        out.true_label[i] = kOpenSetLabel;
      } else if (asymmetric) {
        out.noisy_label[i] = pair_map[c];
      } else {
        if (k_count < 2) throw ConfigError("symmetric noise needs at least two categories");
        int target = static_cast<int>(rng.below(k_count - 1));
        if (target >= c) ++target;
        out.noisy_label[i] = target;
      }
    }
  }
  return out;
}

NoiseReport noise_report(const Dataset& data) {
  NoiseReport report;
  report.flipped_per_category.assign(data.num_categories, 0);
  report.open_set_per_category.assign(data.num_categories, 0);
  for (Index i = 0; i < data.size(); ++i) {
    if (data.open_set[i]) {
      ++report.open_set_per_category[data.noisy_label[i]];
      ++report.total_noisy;
    } else if (data.noisy_label[i] != data.true_label[i]) {
      ++report.flipped_per_category[data.true_label[i]];
      ++report.total_noisy;
    }
  }
  return report;
}

}  // namespace neat
