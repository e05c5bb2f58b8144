#include "neat/model.hpp"
#include "neat/rng.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace neat::model {

namespace {

constexpr double kNormFloor = 1e-12;

void normalize_rows(const RowMatrixXd& in, RowMatrixXd& out, VectorXd& norms) {
  norms = in.rowwise().norm().cwiseMax(kNormFloor);
  out = in.array().colwise() / norms.array();
}

// Project each row of `upstream` onto the tangent space of the matching unit row and divide
// by the pre-normalization norm: the Jacobian of u -> u / |u|.
RowMatrixXd normalize_backward(const RowMatrixXd& upstream, const RowMatrixXd& unit, const VectorXd& norms) {
  const VectorXd radial = (upstream.array() * unit.array()).rowwise().sum();
  RowMatrixXd out = upstream - (unit.array().colwise() * radial.array()).matrix();
  return out.array().colwise() / norms.array();
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "linear"; }

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "linear") return Activation::linear;
  throw ConfigError("unknown activation: " + std::string(name));
}

Parameters Parameters::zeros_like(const Parameters& other) {
  Parameters p;
  for (int s = 0; s < kCount; ++s) p.tensors[s] = Eigen::MatrixXd::Zero(other.tensors[s].rows(), other.tensors[s].cols());
  return p;
}

Index Parameters::count() const {
  Index n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

bool Parameters::all_finite() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const Eigen::MatrixXd& t) { return t.allFinite(); });
}

std::uint64_t Parameters::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const auto& t : tensors) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (Index i = 0; i < t.size() * static_cast<Index>(sizeof(double)); ++i) {
      h = (h ^ bytes[i]) * 0x100000001B3ull;
    }
  }
  return h;
}

ModelState init_model(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_dim < 1 || arch.hidden_dim < 1 || arch.embed_dim < 1 || arch.proj_dim < 1 || arch.num_categories < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  ModelState state;
  state.arch = arch;
  const std::array<std::pair<int, int>, 4> shapes{{{arch.hidden_dim, arch.input_dim},
                                                    {arch.embed_dim, arch.hidden_dim},
                                                    {arch.num_categories, arch.embed_dim},
                                                    {arch.proj_dim, arch.embed_dim}}};
  for (int layer = 0; layer < 4; ++layer) {
    const auto [rows, cols] = shapes[layer];
    CounterRng rng(derive_seed(seed, 0x4C00 + layer));
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Eigen::MatrixXd w(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-bound, bound);
    }
    state.params.tensors[2 * layer] = std::move(w);
    state.params.tensors[2 * layer + 1] = Eigen::MatrixXd::Zero(rows, 1);
  }
  state.momentum = Parameters::zeros_like(state.params);
  return state;
}

ModelState identity_encoder(const Architecture& arch, std::uint64_t seed) {
  if (arch.input_dim != arch.hidden_dim || arch.hidden_dim != arch.embed_dim) {
    throw ConfigError("identity encoder needs input_dim == hidden_dim == embed_dim");
  }
  Architecture a = arch;
  a.activation = Activation::linear;
  ModelState state = init_model(a, seed);
  state.params[Parameters::kW1] = Eigen::MatrixXd::Identity(a.hidden_dim, a.input_dim);
  state.params[Parameters::kW2] = Eigen::MatrixXd::Identity(a.embed_dim, a.hidden_dim);
  return state;
}

ForwardCache forward(const ModelState& state, RowMatrixXd input, Index group) {
  const Parameters& p = state.params;
  if (group < 1 || input.rows() % group != 0) throw ContractViolation("forward: rows not divisible by group");
  if (input.cols() != p[Parameters::kW1].cols()) throw ConfigError("forward: input dimension mismatch");
  ForwardCache c;
  c.group = group;
  c.input = std::move(input);
  c.pre_hidden = c.input * p[Parameters::kW1].transpose();
  c.pre_hidden.rowwise() += p[Parameters::kB1].col(0).transpose();
  if (state.arch.activation == Activation::tanh) {
    c.hidden = c.pre_hidden.array().tanh();
  } else {
    c.hidden = c.pre_hidden;
  }
  RowMatrixXd u = c.hidden * p[Parameters::kW2].transpose();
  u.rowwise() += p[Parameters::kB2].col(0).transpose();
  normalize_rows(u, c.frames, c.frame_norm);

  const Index n = c.frames.rows() / group;
  RowMatrixXd mean(n, c.frames.cols());
  for (Index i = 0; i < n; ++i) mean.row(i) = c.frames.middleRows(i * group, group).colwise().mean();
  normalize_rows(mean, c.clips, c.clip_norm);

  c.logits = c.clips * p[Parameters::kWg].transpose();
  c.logits.rowwise() += p[Parameters::kBg].col(0).transpose();
  RowMatrixXd uh = c.clips * p[Parameters::kWh].transpose();
  uh.rowwise() += p[Parameters::kBh].col(0).transpose();
  normalize_rows(uh, c.z, c.proj_norm);
  return c;
}

Parameters backward(const ModelState& state, const ForwardCache& c, const RowMatrixXd& d_logits,
                    const RowMatrixXd& d_z) {
  const Parameters& p = state.params;
  Parameters g = Parameters::zeros_like(p);

  const RowMatrixXd d_uh = normalize_backward(d_z, c.z, c.proj_norm);
  g[Parameters::kWh] = d_uh.transpose() * c.clips;
  g[Parameters::kBh] = d_uh.colwise().sum().transpose();
  g[Parameters::kWg] = d_logits.transpose() * c.clips;
  g[Parameters::kBg] = d_logits.colwise().sum().transpose();

  const RowMatrixXd d_clips = d_logits * p[Parameters::kWg] + d_uh * p[Parameters::kWh];
  const RowMatrixXd d_mean = normalize_backward(d_clips, c.clips, c.clip_norm);

  RowMatrixXd d_frames(c.frames.rows(), c.frames.cols());
  const double inv_group = 1.0 / static_cast<double>(c.group);
  for (Index i = 0; i < d_mean.rows(); ++i) {
    d_frames.middleRows(i * c.group, c.group).rowwise() = d_mean.row(i) * inv_group;
  }
  const RowMatrixXd d_u = normalize_backward(d_frames, c.frames, c.frame_norm);
  g[Parameters::kW2] = d_u.transpose() * c.hidden;
  g[Parameters::kB2] = d_u.colwise().sum().transpose();

  RowMatrixXd d_pre = d_u * p[Parameters::kW2];
  if (state.arch.activation == Activation::tanh) d_pre.array() *= 1.0 - c.hidden.array().square();
  g[Parameters::kW1] = d_pre.transpose() * c.input;
  g[Parameters::kB1] = d_pre.colwise().sum().transpose();
  return g;
}

Embedding embed(const ModelState& state, const Dataset& data, Index chunk) {
  const Index m = data.size();
  const Index t = data.frames;
  Embedding out;
  out.features.frames = t;
  out.features.frame_features.resize(m * t, state.arch.embed_dim);
  out.features.clips.resize(m, state.arch.embed_dim);
  out.logits.resize(m, state.arch.num_categories);
  const Index chunks = (m + chunk - 1) / chunk;
  parallel_for(chunks, [&](Index c) {
    const Index begin = c * chunk;
    const Index count = std::min(chunk, m - begin);
    const ForwardCache fc = forward(state, data.features.middleRows(begin * t, count * t).cast<double>(), t);
    out.features.frame_features.middleRows(begin * t, count * t) = fc.frames;
    out.features.clips.middleRows(begin, count) = fc.clips;
    out.logits.middleRows(begin, count) = fc.logits;
  });
  return out;
}

double accuracy(const RowMatrixXd& logits, std::span<const int> labels) {
  Index correct = 0;
  Index counted = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    if (labels[i] < 0) continue;
    Index arg;
    logits.row(i).maxCoeff(&arg);
    correct += arg == labels[i];
    ++counted;
  }
  return counted ? static_cast<double>(correct) / static_cast<double>(counted) : 0.0;
}

namespace {

constexpr std::array<unsigned char, 4> kCheckpointMagic{0x4E, 0x45, 0x41, 0x4D};  // "NEAM"
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(kCheckpointMagic.data()), kCheckpointMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, Parameters::kCount);
  for (const auto& t : state.params.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols()));
    for (Index r = 0; r < t.rows(); ++r) {
      for (Index c = 0; c < t.cols(); ++c) put_le<float>(out, static_cast<float>(t(r, c)));
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ModelState load_checkpoint(const Architecture& arch, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<unsigned char, 4> magic{};
  if (!in.read(reinterpret_cast<char*>(magic.data()), magic.size()) || magic != kCheckpointMagic) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  if (get_le<std::uint32_t>(in) != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  if (get_le<std::uint32_t>(in) != Parameters::kCount) throw IoError("checkpoint: unexpected tensor count");
  ModelState state = init_model(arch, 0);
  for (auto& t : state.params.tensors) {
    const auto rows = get_le<std::uint32_t>(in);
    const auto cols = get_le<std::uint32_t>(in);
    if (rows != t.rows() || cols != t.cols()) throw ConfigError("checkpoint shape does not match architecture");
    for (Index r = 0; r < t.rows(); ++r) {
      for (Index c = 0; c < t.cols(); ++c) t(r, c) = get_le<float>(in);
    }
  }
  return state;
}

}  // namespace neat::model
