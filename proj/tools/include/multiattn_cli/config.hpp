#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "multiattn/model.hpp"
#include "multiattn/training.hpp"

namespace multiattn::cli {

/// Everything a training run needs. Mirrors the JSON config document:
///
///   {
///     "seed": 1,
///     "model": {"embed_dim": 32, "hidden_dim": 32, "attn_dim": 64,
///               "decoder_dim": 32, "strategy": "flat",
///               "share_projections": false, "sentinel": false,
///               "ctx_dim": 0, "decoder": "cgru"},
///     "train": {"lr": 1e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
///               "batch_size": 32, "max_steps": 20000, "valid_interval": 250,
///               "patience": 5, "target_accuracy": null,
///               "max_decode_len": 64},
///     "data": {"train": "train.jsonl", "valid": "valid.jsonl"},
///     "sources": [0, 1],
///     "out": "runs/flat"
///   }
///
/// Every key is optional; unknown keys are rejected. Relative data paths are
/// resolved against the config file's directory.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path train_data;
  std::filesystem::path valid_data;
  /// Subset of dataset sources to use, in order (empty = all).
  std::vector<std::size_t> sources;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 1;

  /// Throws ConfigError for invalid dimensions, rates or combinations.
  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

}  // namespace multiattn::cli
