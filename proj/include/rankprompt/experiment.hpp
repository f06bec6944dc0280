#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankprompt/config.hpp"
#include "rankprompt/data.hpp"
#include "rankprompt/eval.hpp"
#include "rankprompt/model.hpp"
#include "rankprompt/sms.hpp"

namespace rankprompt {

/// Everything needed to resume training or run inference.
struct Checkpoint {
  std::size_t epoch = 0;
  ModelParams params;
  OptimizerState optimizer;
  ClassStats sms{2};
  PipelineConfig pipeline;

  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json& doc);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double main = 0.0;
  double rank = 0.0;
  double total = 0.0;
  MetricsReport train_metrics;

  nlohmann::json to_json() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> log;
};

/// Fresh parameters, optimizer and empty SMS statistics for `cfg`.
Checkpoint initial_checkpoint(const RunConfig& cfg, std::size_t feature_dim, std::uint64_t seed);

/// Runs cfg.epochs epochs on the train split. Each batch is encoded, calibrated with
/// the statistics committed at the end of the previous epoch, and its raw similarities
/// are accumulated for the next commit.
TrainResult train_model(const RunConfig& cfg, const PipelineConfig& pipeline, const Dataset& dataset,
                        std::uint64_t seed);

/// Similarities used for evaluation. When calibration applies, each row is calibrated
/// with the statistics of its raw-argmax class; true labels are never consulted.
SimilarityMatrix infer_similarity(const Checkpoint& checkpoint, const Matrix& features, bool sms_at_inference);

MetricsReport evaluate_split(const Checkpoint& checkpoint, const Dataset& dataset, Split split,
                             bool sms_at_inference);

ClassMeanSimilarity heatmap_split(const Checkpoint& checkpoint, const Dataset& dataset, Split split,
                                  bool sms_at_inference);

struct CommandOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> dataset;
  Split split = Split::kTest;
  std::optional<std::filesystem::path> out;
};

/// Per-variant summary produced by the ablation battery.
struct AblationSummary {
  struct Stat {
    double mean = 0.0;
    double stdev = 0.0;
  };
  struct Variant {
    std::string name;
    Stat macro_f1;
    Stat macro_auc;
    Stat rank_monotonicity;
    std::vector<MetricsReport> runs;
  };
  std::vector<std::uint64_t> seeds;
  std::vector<Variant> variants;

  const Variant& variant(std::string_view name) const;
  nlohmann::json to_json() const;
};

AblationSummary run_ablation(const RunConfig& cfg, const Dataset& dataset);

// Commands. Each returns the path of its main output file.
std::filesystem::path cmd_generate(const RunConfig& cfg, const CommandOptions& opts);
std::filesystem::path cmd_train(const RunConfig& cfg, const CommandOptions& opts);
std::filesystem::path cmd_eval(const RunConfig& cfg, const CommandOptions& opts);
std::filesystem::path cmd_heatmap(const RunConfig& cfg, const CommandOptions& opts);
std::filesystem::path cmd_ablate(const RunConfig& cfg, const CommandOptions& opts);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace rankprompt
