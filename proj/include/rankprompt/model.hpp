#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include <json.hpp>

#include "rankprompt/core.hpp"
#include "rankprompt/losses.hpp"
#include "rankprompt/sms.hpp"

namespace rankprompt {

struct ModelHyper {
  std::size_t feature_dim = 16;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 32;
  std::size_t classes = 5;

  void validate() const;
  friend bool operator==(const ModelHyper&, const ModelHyper&) = default;
};

/// Encoder F→H (tanh) →D plus one learnable embedding per class.
/// Also used to hold gradients and optimizer moments of the same shapes.
struct ModelParams {
  ModelHyper hyper;
  Matrix w1;    ///< F×H
  Matrix b1;    ///< 1×H
  Matrix w2;    ///< H×D
  Matrix b2;    ///< 1×D
  Matrix text;  ///< K×D

  static constexpr std::size_t kTensorCount = 5;
  static constexpr std::array<const char*, kTensorCount> kTensorNames = {"w1", "b1", "w2", "b2", "text"};

  static ModelParams zeros(const ModelHyper& hyper);

  std::array<Matrix*, kTensorCount> tensors() { return {&w1, &b1, &w2, &b2, &text}; }
  std::array<const Matrix*, kTensorCount> tensors() const { return {&w1, &b1, &w2, &b2, &text}; }

  bool same_shape(const ModelParams& other) const;
  bool all_finite() const;

  nlohmann::json to_json() const;
  static ModelParams from_json(const nlohmann::json& doc);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Uniform(±1/√fan_in) initialization; identical seeds give identical parameters.
ModelParams init_params(const ModelHyper& hyper, std::uint64_t seed);

/// tanh(features·W1 + b1)·W2 + b2, optionally unit-normalized per row.
EmbeddingMatrix encode_images(const ModelParams& params, const Matrix& features, bool unit_normalize = false);

struct PipelineConfig {
  LossConfig loss;
  bool normalize_embeddings = false;
  bool sms_enabled = true;
  CalibrationVariant sms_variant = CalibrationVariant::kStandard;
};

struct ForwardResult {
  SimilarityMatrix raw;
  SimilarityMatrix calibrated;
  RowCalibration calibration;
};

/// encode → similarity → calibrate. Calibration is the identity when SMS is disabled
/// or `sms` has not been committed yet. `classes` selects the statistics used per row.
ForwardResult forward(const ModelParams& params, const Matrix& features, std::span<const int> classes,
                      const ClassStats& sms, const PipelineConfig& cfg);

struct BackwardResult {
  ModelParams grads;
  LossReport report;
  SimilarityMatrix raw_similarity;
};

/// Gradients of the total loss with respect to every parameter. Committed SMS
/// statistics are constants; calibration contributes only its per-entry scale.
BackwardResult model_backward(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                              const ClassStats& sms, const PipelineConfig& cfg);

/// Scalar total loss of the full pipeline; the reference for finite differences.
double pipeline_loss(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                     const ClassStats& sms, const PipelineConfig& cfg);

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  ModelParams first_moment;
  ModelParams second_moment;

  nlohmann::json to_json() const;
  static OptimizerState from_json(const nlohmann::json& doc);
};

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate, const ModelHyper& hyper);

/// Applies one update in place.
void optimizer_step(ModelParams& params, const ModelParams& grads, OptimizerState& state);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& doc);

}  // namespace rankprompt
