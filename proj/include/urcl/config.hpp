#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "urcl/augment.hpp"
#include "urcl/stmodel.hpp"

namespace urcl {

enum class Strategy { Urcl, OneFitAll, Finetune };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

struct ExperimentConfig {
  std::string dataset;
  Index input_steps = 12;
  Index output_steps = 1;
  Index batch_size = 32;
  Index eval_batch_size = 64;
  int epochs = 100;
  int patience = 15;
  double learning_rate = 1e-3;
  std::string optimizer = "adam";
  double grad_clip = 5.0;
  std::size_t buffer_capacity = 256;
  double mixup_alpha = 0.5;
  double temperature = 0.5;
  double ssl_weight = 1.0;
  /// Interference pool size; 0 means 4 * batch_size.
  std::size_t rmir_pool = 0;
  /// Replayed items per step; 0 means batch_size.
  std::size_t rmir_sample = 0;
  AugmentConfig augment;
  std::vector<Index> hidden_widths{32, 32, 32, 32, 256};
  std::vector<Index> dilations{1, 2, 1, 2, 4};
  Index diffusion_steps = 2;
  Index embedding_dim = 10;
  Index decoder_hidden = 512;
  Index projector_hidden = 256;
  double base_fraction = 0.3;
  int incremental_segments = 4;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::Urcl;

  std::size_t pool_size() const { return rmir_pool > 0 ? rmir_pool : static_cast<std::size_t>(4 * batch_size); }
  std::size_t sample_size() const {
    return rmir_sample > 0 ? rmir_sample : static_cast<std::size_t>(batch_size);
  }

  /// Model settings for a dataset of the given shape.
  ModelConfig model_config(Index nodes, Index channels, bool directed) const;

  /// Throws ConfigError on the first invalid field.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses `key = value` lines; `#` starts a comment. Keys not listed in the
/// serialized form are rejected, as are repeated keys. Missing keys keep defaults.
/// The result is validated.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// One line per field, in a fixed order; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

/// Digest of the serialized config, stored in checkpoints.
std::string config_hash(const ExperimentConfig& config);

}  // namespace urcl
