#include "neat/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace neat {

namespace {

constexpr std::array<unsigned char, 4> kMagic{0x4E, 0x45, 0x41, 0x54};  // "NEAT"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 1);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("neatds: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(kMagic.data()), kMagic.size());
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.frames));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.dim));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.num_categories));
  // Row-major storage already matches instance-major, frame-major, channel-minor order.
  for (Index r = 0; r < data.features.rows(); ++r) {
    for (Index c = 0; c < data.features.cols(); ++c) put_le<float>(out, data.features(r, c));
  }
  for (int label : data.noisy_label) put_le<std::int32_t>(out, label);
  for (int label : data.true_label) put_le<std::int32_t>(out, label);
  for (auto flag : data.open_set) put_le<std::uint8_t>(out, flag ? 1 : 0);
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<unsigned char, 4> magic{};
  if (!in.read(reinterpret_cast<char*>(magic.data()), magic.size()) || magic != kMagic) {
    throw IoError("not a neatds file: " + path.string());
  }
  if (get_le<std::uint32_t>(in) != kVersion) throw IoError("unsupported neatds version");
  const auto m = get_le<std::uint32_t>(in);
  const auto t = get_le<std::uint32_t>(in);
  const auto d = get_le<std::uint32_t>(in);
  const auto k = get_le<std::uint32_t>(in);
  if (t == 0 || d == 0 || k == 0) throw IoError("neatds: zero dimension in header");

  const auto file_size = std::filesystem::file_size(path);
  const std::uintmax_t expected = 24 + std::uintmax_t{m} * t * d * 4 + std::uintmax_t{m} * 9;
  if (file_size != expected) throw IoError("neatds: size mismatch with header");

  Dataset data;
  data.num_categories = static_cast<int>(k);
  data.frames = static_cast<int>(t);
  data.dim = static_cast<int>(d);
  data.features.resize(Index{m} * t, d);
  for (Index r = 0; r < data.features.rows(); ++r) {
    for (Index c = 0; c < data.features.cols(); ++c) data.features(r, c) = get_le<float>(in);
  }
  data.noisy_label.resize(m);
  data.true_label.resize(m);
  data.open_set.resize(m);
  for (auto& label : data.noisy_label) {
    label = get_le<std::int32_t>(in);
    if (label < 0 || label >= static_cast<int>(k)) throw IoError("neatds: noisy label out of range");
  }
  for (auto& label : data.true_label) label = get_le<std::int32_t>(in);
  for (auto& flag : data.open_set) flag = get_le<std::uint8_t>(in);
  return data;
}

}  // namespace neat
