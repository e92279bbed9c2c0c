#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffetm/model.hpp"
#include "diffetm/trainer.hpp"

namespace diffetm::cli {

/// Everything a command needs, as one flat key-value set. Precedence:
/// defaults < preset < config file < command-line flags.
struct RunConfig {
  // Corpus ingestion.
  std::filesystem::path input;       // single raw file, split by split_fractions
  std::filesystem::path train_file;  // or three pre-split raw files
  std::filesystem::path valid_file;
  std::filesystem::path test_file;
  std::filesystem::path stop_words;
  std::uint32_t min_df = 1;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;
  std::filesystem::path corpus_dir = "corpus";

  model::ModelConfig model;
  trainer::TrainConfig train;
  std::filesystem::path output_dir = "runs";

  // Command-specific.
  std::filesystem::path checkpoint;  // eval, topics
  std::string eval_split = "test";   // eval, sweep-t
  std::uint32_t top_n = 10;          // topics
  std::vector<std::uint32_t> t_values{0, 20, 50, 100, 150, 200};  // sweep-t
  std::filesystem::path run_dir;     // kl-test
  std::string kl_split = "test";     // kl-test

  /// Effective configuration with every key present.
  nlohmann::json to_json() const;

  /// Overlays keys from `j` onto this config. Unknown keys and type errors
  /// throw InvalidConfig naming the key and the expected form.
  void apply_json(const nlohmann::json& j);

  /// Short hash of the effective config (the seed is part of it).
  std::string run_id() const;
};

/// Named parameter presets for the published settings.
std::vector<std::string> preset_names();
RunConfig preset(const std::string& name);

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

}  // namespace diffetm::cli
