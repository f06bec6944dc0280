#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "rankprompt/config.hpp"
#include "rankprompt/experiment.hpp"

using namespace rankprompt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rankprompt_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig small_config(const fs::path& out) {
  RunConfig cfg;
  cfg.samples = 200;
  cfg.feature_dim = 4;
  cfg.hidden_dim = 8;
  cfg.embed_dim = 4;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.ablation_seeds = 2;
  cfg.out_dir = out;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string command = std::string(RANKPROMPT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsMirrorTheMethod) {
  const RunConfig cfg = parse_config("");
  EXPECT_EQ(cfg.classes, 5u);
  EXPECT_EQ(cfg.tau, 1.0);
  EXPECT_EQ(cfg.lambda_rank, 1.0);
  EXPECT_EQ(cfg.optimizer, OptimizerKind::kAdam);
  EXPECT_EQ(cfg.learning_rate, 1e-3);
  EXPECT_TRUE(cfg.sms_enabled);
}

TEST(Config, ParsesKeysAndComments) {
  const RunConfig cfg = parse_config(
      "# experiment\n"
      "seed = 42\n"
      "imbalance_ratio = 16   # long tail\n"
      "optimizer = sgd\n"
      "sms_variant = literal\n"
      "sms_enabled = false\n"
      "out_dir = results/a\n");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.imbalance_ratio, 16.0);
  EXPECT_EQ(cfg.optimizer, OptimizerKind::kSgd);
  EXPECT_EQ(cfg.sms_variant, CalibrationVariant::kLiteral);
  EXPECT_FALSE(cfg.sms_enabled);
  EXPECT_EQ(cfg.out_dir, fs::path("results/a"));
}

TEST(Config, ErrorsNameTheKey) {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("colour = red\n").find("colour"), std::string::npos);
  EXPECT_NE(message("tau = 0\n").find("tau"), std::string::npos);
  EXPECT_NE(message("epochs = many\n").find("epochs"), std::string::npos);
  EXPECT_NE(message("seed = 1\nseed = 2\n").find("seed"), std::string::npos);
  EXPECT_NE(message("imbalance_ratio = 0.5\n").find("imbalance_ratio"), std::string::npos);
  EXPECT_NE(message("optimizer = rmsprop\n").find("optimizer"), std::string::npos);
  EXPECT_THROW(parse_config("just words\n"), ConfigError);
}

TEST(Config, TextRoundTrip) {
  RunConfig cfg = small_config("some/dir");
  cfg.class_sep = 1.0 / 3.0;
  cfg.sms_variant = CalibrationVariant::kLiteral;
  const RunConfig back = parse_config(to_config_text(cfg));
  EXPECT_EQ(to_config_text(back), to_config_text(cfg));
  EXPECT_EQ(back.class_sep, cfg.class_sep);
}

TEST(Config, EnvironmentSeedOverride) {
  RunConfig cfg;
  ::setenv("RANKPROMPT_SEED", "123", 1);
  apply_env_overrides(cfg);
  ::unsetenv("RANKPROMPT_SEED");
  EXPECT_EQ(cfg.seed, 123u);
  ::setenv("RANKPROMPT_SEED", "abc", 1);
  EXPECT_THROW(apply_env_overrides(cfg), ConfigError);
  ::unsetenv("RANKPROMPT_SEED");
}

TEST(Train, ZeroEpochsKeepsInitialization) {
  RunConfig cfg = small_config(scratch("zero"));
  cfg.epochs = 0;
  const Dataset ds = generate_synthetic(cfg.dataset_spec());
  const auto result = train_model(cfg, cfg.pipeline(), ds, cfg.seed);
  EXPECT_TRUE(result.log.empty());
  EXPECT_EQ(result.checkpoint.params, initial_checkpoint(cfg, ds.feature_dim(), cfg.seed).params);
  EXPECT_FALSE(result.checkpoint.sms.committed());
}

TEST(Train, LogHasOneRecordPerEpoch) {
  const RunConfig cfg = small_config(scratch("log"));
  const Dataset ds = generate_synthetic(cfg.dataset_spec());
  const auto result = train_model(cfg, cfg.pipeline(), ds, cfg.seed);
  ASSERT_EQ(result.log.size(), 3u);
  EXPECT_EQ(result.checkpoint.epoch, 3u);
  EXPECT_TRUE(result.checkpoint.sms.committed());
  const auto doc = result.log[1].to_json();
  for (const char* key : {"epoch", "main", "rank", "total", "train"}) EXPECT_TRUE(doc.contains(key)) << key;
  EXPECT_NEAR(result.log[1].total, result.log[1].main + result.log[1].rank, 1e-9);
}

TEST(Train, CheckpointRoundTrip) {
  const RunConfig cfg = small_config(scratch("ck"));
  const Dataset ds = generate_synthetic(cfg.dataset_spec());
  const auto ck = train_model(cfg, cfg.pipeline(), ds, cfg.seed).checkpoint;
  const auto back = Checkpoint::from_json(nlohmann::json::parse(ck.to_json().dump()));
  EXPECT_EQ(back.to_json().dump(), ck.to_json().dump());
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.sms, ck.sms);
}

TEST(Train, MismatchedDatasetRejectedBeforeTraining) {
  RunConfig cfg = small_config(scratch("mismatch"));
  const Dataset ds = generate_synthetic(cfg.dataset_spec());
  cfg.classes = 4;
  EXPECT_ANY_THROW(train_model(cfg, cfg.pipeline(), ds, cfg.seed));
}

TEST(Inference, CalibrationNeverReadsTrueLabels) {
  const RunConfig cfg = small_config(scratch("labels"));
  Dataset ds = generate_synthetic(cfg.dataset_spec());
  const auto ck = train_model(cfg, cfg.pipeline(), ds, cfg.seed).checkpoint;
  const auto before = infer_similarity(ck, ds.features, true);
  for (int& l : ds.labels) l = (l + 1) % 5;
  EXPECT_EQ(infer_similarity(ck, ds.features, true).values(), before.values());
}

TEST(Inference, RawWhenNeverCommitted) {
  RunConfig cfg = small_config(scratch("raw"));
  cfg.epochs = 0;
  const Dataset ds = generate_synthetic(cfg.dataset_spec());
  const auto ck = train_model(cfg, cfg.pipeline(), ds, cfg.seed).checkpoint;
  EXPECT_EQ(infer_similarity(ck, ds.features, true).values(), infer_similarity(ck, ds.features, false).values());
}

TEST(Ablation, SummaryHasFourVariantsWithThreeStats) {
  const RunConfig cfg = small_config(scratch("ablate"));
  const auto summary = run_ablation(cfg, generate_synthetic(cfg.dataset_spec()));
  const auto doc = summary.to_json();
  ASSERT_EQ(doc.at("variants").size(), 4u);
  for (const char* name : {"full", "without_rank", "without_main", "without_sms"}) {
    const auto& v = doc.at("variants").at(name);
    for (const char* metric : {"macro_f1", "macro_auc", "rank_monotonicity"}) {
      EXPECT_TRUE(v.at(metric).contains("mean"));
      EXPECT_TRUE(v.at(metric).contains("stdev"));
    }
    EXPECT_EQ(summary.variant(name).runs.size(), 2u);
  }
}

TEST(Commands, GenerateWritesMetaWithCounts) {
  RunConfig cfg = small_config(scratch("meta"));
  cfg.imbalance_ratio = 16;
  cfg.samples = 620;
  cmd_generate(cfg, {});
  const auto meta = nlohmann::json::parse(read_text_file(cfg.out_dir / "dataset.meta.json"));
  EXPECT_EQ(meta.at("class_counts"), nlohmann::json({320, 160, 80, 40, 20}));
  EXPECT_EQ(meta.at("seed"), 0);
}

TEST(Commands, PipelineProducesParseableOutputs) {
  const RunConfig cfg = small_config(scratch("pipeline"));
  cmd_generate(cfg, {});
  cmd_train(cfg, {});
  const auto metrics_path = cmd_eval(cfg, {});
  const auto heatmap_path = cmd_heatmap(cfg, {});
  EXPECT_NO_THROW(MetricsReport::from_json(nlohmann::json::parse(read_text_file(metrics_path))));
  const std::string heatmap = read_text_file(heatmap_path);
  EXPECT_EQ(std::count(heatmap.begin(), heatmap.end(), '\n'), 6);
  EXPECT_EQ(read_text_file(cmd_eval(cfg, {})), read_text_file(metrics_path));
}

TEST(Commands, MissingInputsAreIoErrors) {
  const RunConfig cfg = small_config(scratch("missing"));
  EXPECT_THROW(cmd_train(cfg, {}), IoError);
  EXPECT_THROW(cmd_eval(cfg, {}), IoError);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const auto good = dir / "good.cfg";
  const auto bad = dir / "bad.cfg";
  std::ofstream(good) << "samples = 100\nepochs = 1\nout_dir = " << (dir / "out").string() << "\n";
  std::ofstream(bad) << "learning_rate = -1\n";
  EXPECT_EQ(run_cli("generate --config " + good.string()), 0);
  EXPECT_EQ(run_cli("train --config " + good.string()), 0);
  EXPECT_EQ(run_cli("eval --config " + good.string() + " --split train"), 0);
  EXPECT_EQ(run_cli("heatmap --config " + good.string()), 0);
  EXPECT_EQ(run_cli("train --config " + bad.string()), 2);
  EXPECT_EQ(run_cli("train --config " + (dir / "absent.cfg").string()), 3);
  EXPECT_EQ(run_cli("eval --config " + good.string() + " --checkpoint " + (dir / "nope.json").string()), 3);
  EXPECT_EQ(run_cli("eval --config " + good.string() + " --split valid"), 2);
  EXPECT_TRUE(fs::exists(dir / "out" / "metrics.json"));
}
