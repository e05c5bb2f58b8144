#pragma once

// Flat JSON run configuration shared by every CLI command.

#include "neat/dataset.hpp"
#include "neat/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace neat {

struct RunConfig {
  GenSpec gen;
  NoiseSpec noise;
  train::TrainConfig train;
  int test_instances_per_category = 50;
  std::string out_dir = "runs";
  std::string run_name = "run";
  bool record_wall_time = false;  // wall_s is written as 0 unless set, keeping metrics.csv reproducible

  // `seed` drives the generator; the noise and training streams derive from it unless
  // given explicitly.
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> noise_seed;
  std::optional<std::uint64_t> train_seed;

  /// Copies the master / derived seeds into gen, noise and train.
  void resolve_seeds();
  /// GenSpec of the clean held-out test set.
  GenSpec test_spec() const;
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig config_from_json(const nlohmann::json& doc);
/// Every field, including defaults and resolved seeds.
nlohmann::json config_to_json(const RunConfig& config);

RunConfig load_config(const std::filesystem::path& path);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace neat
