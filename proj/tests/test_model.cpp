#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rankprompt/model.hpp"
#include "support.hpp"

using namespace rankprompt;

namespace {

ClassStats committed_stats_for(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                               const PipelineConfig& cfg) {
  ClassStats stats(params.hyper.classes);
  const auto raw = forward(params, features, labels, stats, cfg).raw;
  stats.accumulate(raw, labels);
  stats.commit({});
  return stats;
}

// Worst violation ratio across every parameter tensor.
double parameter_gradient_ratio(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                                const ClassStats& stats, const PipelineConfig& cfg, double rel) {
  const auto analytic = model_backward(params, features, labels, stats, cfg).grads;
  double worst = 0.0;
  for (std::size_t t = 0; t < ModelParams::kTensorCount; ++t) {
    const Matrix numeric = fixtures::numeric_gradient(*params.tensors()[t], [&](const Matrix& x) {
      ModelParams probe = params;
      *probe.tensors()[t] = x;
      return pipeline_loss(probe, features, labels, stats, cfg);
    });
    worst = std::max(worst, fixtures::worst_ratio(*analytic.tensors()[t], numeric, rel));
  }
  return worst;
}

}  // namespace

TEST(Init, DeterministicPerSeed) {
  const ModelHyper hyper{4, 8, 3, 5};
  EXPECT_EQ(init_params(hyper, 7), init_params(hyper, 7));
  EXPECT_NE(init_params(hyper, 7), init_params(hyper, 8));
}

TEST(Init, ShapesFollowHyper) {
  const auto p = init_params(ModelHyper{4, 8, 3, 5}, 1);
  EXPECT_EQ(p.text.rows(), 5u);
  EXPECT_EQ(p.text.cols(), 3u);
  EXPECT_EQ(p.w1.rows(), 4u);
  EXPECT_EQ(p.w1.cols(), 8u);
  EXPECT_EQ(p.b1.cols(), 8u);
  EXPECT_EQ(p.w2.rows(), 8u);
  EXPECT_EQ(p.w2.cols(), 3u);
  EXPECT_EQ(p.b2.cols(), 3u);
}

TEST(Init, BoundedByFanIn) {
  const auto p = init_params(ModelHyper{16, 64, 32, 5}, 3);
  for (double v : p.w1.values()) EXPECT_LE(std::abs(v), 0.25);
  for (double v : p.w2.values()) EXPECT_LE(std::abs(v), 0.125);
}

TEST(Init, ZeroDimensionsRejected) {
  EXPECT_THROW(init_params(ModelHyper{0, 8, 3, 5}, 1), InvalidInput);
  EXPECT_THROW(init_params(ModelHyper{4, 8, 0, 5}, 1), InvalidInput);
  EXPECT_THROW(init_params(ModelHyper{4, 8, 3, 1}, 1), InvalidInput);
}

TEST(Encode, ZeroWeightsGiveZeroEmbeddings) {
  const auto p = ModelParams::zeros(ModelHyper{4, 8, 3, 5});
  std::mt19937_64 rng(1);
  const auto x = encode_images(p, fixtures::random_matrix(6, 4, rng));
  EXPECT_EQ(x.values(), Matrix(6, 3));
}

TEST(Encode, SingleSampleShape) {
  const auto p = init_params(ModelHyper{4, 8, 3, 5}, 2);
  EXPECT_EQ(encode_images(p, Matrix(1, 4, 0.5)).values().rows(), 1u);
  EXPECT_EQ(encode_images(p, Matrix(1, 4, 0.5)).dim(), 3u);
}

TEST(Encode, WidthMismatchRejected) {
  const auto p = init_params(ModelHyper{4, 8, 3, 5}, 2);
  EXPECT_THROW(encode_images(p, Matrix(2, 5)), InvalidInput);
}

TEST(Encode, UnitNormalizedRows) {
  const auto p = init_params(ModelHyper{4, 8, 3, 5}, 2);
  std::mt19937_64 rng(4);
  const auto x = encode_images(p, fixtures::random_matrix(5, 4, rng), true);
  for (std::size_t i = 0; i < 5; ++i) {
    double norm = 0.0;
    for (double v : x.values().row(i)) norm += v * v;
    EXPECT_NEAR(norm, 1.0, 1e-12);
  }
}

TEST(Encode, JacobianMatchesFiniteDifferences) {
  const auto p = init_params(ModelHyper{4, 6, 3, 4}, 9);
  std::mt19937_64 rng(9);
  const Matrix features = fixtures::random_matrix(5, 4, rng, 2.0);
  const Matrix x = encode_images(p, features).values();
  const double h = 1e-5;
  for (std::size_t f = 0; f < 4; ++f) {
    for (std::size_t u = 0; u < 6; ++u) {
      ModelParams up = p;
      ModelParams down = p;
      up.w1(f, u) += h;
      down.w1(f, u) -= h;
      const Matrix xu = encode_images(up, features).values();
      const Matrix xd = encode_images(down, features).values();
      for (std::size_t i = 0; i < 5; ++i) {
        double pre = p.b1(0, u);
        for (std::size_t g = 0; g < 4; ++g) pre += features(i, g) * p.w1(g, u);
        const double t = std::tanh(pre);
        for (std::size_t d = 0; d < 3; ++d) {
          // d x[i,d] / d w1[f,u] = feature[i,f] * (1 - tanh^2) * w2[u,d]
          const double analytic = features(i, f) * (1.0 - t * t) * p.w2(u, d);
          const double numeric = (xu(i, d) - xd(i, d)) / (2.0 * h);
          EXPECT_TRUE(fixtures::close_relative(analytic, numeric, 1e-4)) << analytic << " vs " << numeric;
        }
      }
    }
  }
  // The output layer is linear: d x[i,d] / d b2[d] = 1 exactly.
  ModelParams shifted = p;
  shifted.b2(0, 1) += 0.5;
  const Matrix xs = encode_images(shifted, features).values();
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(xs(i, 1) - x(i, 1), 0.5, 1e-12);
}

TEST(Backward, FullChainMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed + 100);
    std::uniform_int_distribution<std::size_t> f(1, 6), h(1, 8), d(1, 4), k(2, 5), m(1, 6);
    const ModelHyper hyper{f(rng), h(rng), d(rng), k(rng)};
    const auto params = init_params(hyper, seed);
    const std::size_t rows = m(rng);
    const Matrix features = fixtures::random_matrix(rows, hyper.feature_dim, rng, 2.0);
    const LabelVector labels = fixtures::random_labels(rows, hyper.classes, rng);
    for (bool normalize : {false, true}) {
      PipelineConfig cfg;
      cfg.normalize_embeddings = normalize;
      EXPECT_LE(parameter_gradient_ratio(params, features, labels, ClassStats(hyper.classes), cfg, 1e-3), 1.0)
          << "seed " << seed << " cold start";
      for (auto variant : {CalibrationVariant::kStandard, CalibrationVariant::kLiteral}) {
        cfg.sms_variant = variant;
        const ClassStats stats = committed_stats_for(params, features, labels, cfg);
        EXPECT_LE(parameter_gradient_ratio(params, features, labels, stats, cfg, 1e-3), 1.0)
            << "seed " << seed << " calibrated";
      }
    }
  }
}

TEST(Backward, SixSampleBatch) {
  const ModelHyper hyper{5, 7, 4, 5};
  const auto params = init_params(hyper, 77);
  std::mt19937_64 rng(77);
  const Matrix features = fixtures::random_matrix(6, 5, rng, 2.0);
  const LabelVector labels{0, 1, 2, 3, 4, 2};
  PipelineConfig cfg;
  const ClassStats stats = committed_stats_for(params, features, labels, cfg);
  EXPECT_LE(parameter_gradient_ratio(params, features, labels, stats, cfg, 1e-3), 1.0);
}

TEST(Backward, SmsDisabledEqualsRawPipeline) {
  const ModelHyper hyper{4, 6, 3, 4};
  const auto params = init_params(hyper, 5);
  std::mt19937_64 rng(5);
  const Matrix features = fixtures::random_matrix(6, 4, rng);
  const LabelVector labels{0, 1, 2, 3, 1, 2};
  PipelineConfig on;
  const ClassStats stats = committed_stats_for(params, features, labels, on);
  PipelineConfig off;
  off.sms_enabled = false;
  const auto with_stats = model_backward(params, features, labels, stats, off);
  const auto cold = model_backward(params, features, labels, ClassStats(4), on);
  EXPECT_EQ(with_stats.grads, cold.grads);
  EXPECT_EQ(with_stats.report.total, cold.report.total);
}

TEST(Backward, ReportMatchesForwardLoss) {
  const ModelHyper hyper{4, 6, 3, 4};
  const auto params = init_params(hyper, 6);
  std::mt19937_64 rng(6);
  const Matrix features = fixtures::random_matrix(6, 4, rng);
  const LabelVector labels{0, 1, 2, 3, 1, 2};
  PipelineConfig cfg;
  const ClassStats stats = committed_stats_for(params, features, labels, cfg);
  const auto result = model_backward(params, features, labels, stats, cfg);
  EXPECT_EQ(result.report.total, pipeline_loss(params, features, labels, stats, cfg));
  const auto fwd = forward(params, features, labels, stats, cfg);
  EXPECT_EQ(result.raw_similarity.values(), fwd.raw.values());
  EXPECT_TRUE(fwd.calibrated.calibrated());
}

TEST(Backward, PerfectSimilarityHasVanishingGradient) {
  // Saturated hidden codes of opposite sign against orthogonal, distant text rows.
  ModelParams p = ModelParams::zeros(ModelHyper{2, 2, 2, 2});
  p.w2 = Matrix{{30, 0}, {0, 30}};
  p.w1 = Matrix{{1, 0}, {0, 1}};
  p.text = Matrix{{30, 0}, {0, 30}};
  const Matrix feats{{20.0, -20.0}, {-20.0, 20.0}};
  const LabelVector labels{0, 1};
  PipelineConfig cfg;
  cfg.loss.lambda_rank = 0.0;
  cfg.sms_enabled = false;
  const auto result = model_backward(p, feats, labels, ClassStats(2), cfg);
  double norm = 0.0;
  for (const Matrix* t : result.grads.tensors())
    for (double v : t->values()) norm += v * v;
  EXPECT_LT(std::sqrt(norm), 1e-8);
}

TEST(Optimizer, SgdArithmetic) {
  ModelParams p = ModelParams::zeros(ModelHyper{1, 1, 1, 2});
  ModelParams g = ModelParams::zeros(p.hyper);
  p.w1(0, 0) = 1.0;
  g.w1(0, 0) = 2.0;
  auto state = make_optimizer(OptimizerKind::kSgd, 0.1, p.hyper);
  optimizer_step(p, g, state);
  EXPECT_DOUBLE_EQ(p.w1(0, 0), 0.8);
}

TEST(Optimizer, ZeroGradientLeavesParameters) {
  const auto start = init_params(ModelHyper{3, 4, 2, 3}, 1);
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    ModelParams p = start;
    auto state = make_optimizer(kind, 0.01, p.hyper);
    optimizer_step(p, ModelParams::zeros(p.hyper), state);
    EXPECT_EQ(p, start);
  }
}

TEST(Optimizer, AdamFirstStepHasLearningRateMagnitude) {
  for (double c : {1e-6, 1.0, 1e6}) {
    ModelParams p = ModelParams::zeros(ModelHyper{2, 3, 2, 2});
    ModelParams g = p;
    for (Matrix* t : g.tensors())
      for (double& v : t->values()) v = c;
    auto state = make_optimizer(OptimizerKind::kAdam, 1e-3, p.hyper);
    optimizer_step(p, g, state);
    for (const Matrix* t : p.tensors())
      for (double v : t->values()) EXPECT_NEAR(v, -1e-3, 1e-3 * (c < 1e-3 ? 1e-2 : 1e-6));
  }
}

TEST(Optimizer, ShapeMismatchRejected) {
  ModelParams p = ModelParams::zeros(ModelHyper{2, 3, 2, 2});
  auto state = make_optimizer(OptimizerKind::kSgd, 0.1, p.hyper);
  EXPECT_THROW(optimizer_step(p, ModelParams::zeros(ModelHyper{2, 3, 2, 3}), state), InvalidInput);
  EXPECT_THROW(make_optimizer(OptimizerKind::kSgd, 0.0, p.hyper), InvalidInput);
}

TEST(Optimizer, SmallStepDecreasesLoss) {
  std::mt19937_64 rng(50);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ModelHyper hyper{4, 6, 3, 4};
    ModelParams params = init_params(hyper, seed);
    const Matrix features = fixtures::random_matrix(6, 4, rng, 2.0);
    const LabelVector labels = fixtures::random_labels(6, 4, rng);
    PipelineConfig cfg;
    const ClassStats stats = committed_stats_for(params, features, labels, cfg);
    const auto result = model_backward(params, features, labels, stats, cfg);
    auto state = make_optimizer(OptimizerKind::kSgd, 1e-4, hyper);
    optimizer_step(params, result.grads, state);
    EXPECT_LT(pipeline_loss(params, features, labels, stats, cfg), result.report.total);
  }
}

TEST(Optimizer, ReplayIsBitIdentical) {
  auto run = [] {
    const ModelHyper hyper{4, 6, 3, 4};
    ModelParams params = init_params(hyper, 3);
    auto state = make_optimizer(OptimizerKind::kAdam, 1e-2, hyper);
    std::mt19937_64 rng(3);
    ClassStats stats(4);
    PipelineConfig cfg;
    for (int step = 0; step < 25; ++step) {
      const Matrix features = fixtures::random_matrix(8, 4, rng);
      const LabelVector labels = fixtures::random_labels(8, 4, rng);
      const auto result = model_backward(params, features, labels, stats, cfg);
      stats.accumulate(result.raw_similarity, labels);
      optimizer_step(params, result.grads, state);
      if (step % 5 == 4) stats.commit({});
    }
    return params;
  };
  EXPECT_EQ(run(), run());
}

TEST(Serialization, ParamsAndOptimizerRoundTrip) {
  const ModelHyper hyper{3, 4, 2, 3};
  const auto params = init_params(hyper, 12);
  EXPECT_EQ(ModelParams::from_json(nlohmann::json::parse(params.to_json().dump())), params);
  ModelParams p = params;
  auto state = make_optimizer(OptimizerKind::kAdam, 1e-3, hyper);
  optimizer_step(p, params, state);
  const auto back = OptimizerState::from_json(nlohmann::json::parse(state.to_json().dump()));
  EXPECT_EQ(back.step, state.step);
  EXPECT_EQ(back.first_moment, state.first_moment);
  EXPECT_EQ(back.second_moment, state.second_moment);
  EXPECT_EQ(back.learning_rate, state.learning_rate);
}
