#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rankprompt/data.hpp"
#include "rankprompt/model.hpp"

namespace rankprompt {

/// Bad configuration key or value. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or unreadable input, or unwritable output. Maps to exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every experiment knob. Read from flat `key = value` text with `#` comments.
struct RunConfig {
  std::uint64_t seed = 0;

  std::size_t classes = 5;
  std::size_t samples = 2000;
  std::size_t feature_dim = 16;
  double class_sep = 5.0;
  double noise_sigma = 1.0;
  double imbalance_ratio = 1.0;

  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;

  double tau = 1.0;
  double lambda_rank = 1.0;

  bool sms_enabled = true;
  CalibrationVariant sms_variant = CalibrationVariant::kStandard;
  double sms_sigma = 0.5;
  bool sms_include_self = true;
  /// Apply the last committed statistics when evaluating.
  bool sms_at_inference = true;
  bool normalize_embeddings = false;

  std::size_t ablation_seeds = 5;
  std::filesystem::path out_dir = "out";

  /// Throws ConfigError naming the first invalid key.
  void validate() const;

  DatasetSpec dataset_spec() const;
  ModelHyper model_hyper() const;
  PipelineConfig pipeline() const;
  KernelSpec kernel() const;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical `key = value` rendering; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const RunConfig& cfg);

/// Applies RANKPROMPT_SEED when set.
void apply_env_overrides(RunConfig& cfg);

std::string_view optimizer_name(OptimizerKind kind);
std::string_view variant_name(CalibrationVariant variant);

}  // namespace rankprompt
