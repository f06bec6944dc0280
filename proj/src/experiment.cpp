#include "rankprompt/experiment.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace rankprompt {

namespace {

nlohmann::json pipeline_to_json(const PipelineConfig& p) {
  return {{"tau", p.loss.tau},
          {"lambda_rank", p.loss.lambda_rank},
          {"use_main", p.loss.use_main},
          {"normalize_embeddings", p.normalize_embeddings},
          {"sms_enabled", p.sms_enabled},
          {"sms_variant", std::string(variant_name(p.sms_variant))}};
}

PipelineConfig pipeline_from_json(const nlohmann::json& doc) {
  PipelineConfig p;
  p.loss.tau = doc.at("tau").get<double>();
  p.loss.lambda_rank = doc.at("lambda_rank").get<double>();
  p.loss.use_main = doc.at("use_main").get<bool>();
  p.loss.validate();
  p.normalize_embeddings = doc.at("normalize_embeddings").get<bool>();
  p.sms_enabled = doc.at("sms_enabled").get<bool>();
  const auto variant = doc.at("sms_variant").get<std::string>();
  if (variant == "standard") {
    p.sms_variant = CalibrationVariant::kStandard;
  } else if (variant == "literal") {
    p.sms_variant = CalibrationVariant::kLiteral;
  } else {
    throw InvalidInput("unknown sms_variant '" + variant + "'");
  }
  return p;
}

std::filesystem::path output_dir(const RunConfig& cfg, const CommandOptions& opts) {
  auto dir = opts.out.value_or(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

Dataset load_dataset(const std::filesystem::path& path, std::size_t classes) {
  if (!std::filesystem::exists(path)) throw IoError("dataset not found: " + path.string());
  try {
    return load_csv(path, classes);
  } catch (const ParseError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  try {
    return Checkpoint::from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint: " + e.what());
  } catch (const InvalidInput& e) {
    throw IoError(path.string() + ": malformed checkpoint: " + e.what());
  }
}

void check_dataset_matches(const RunConfig& cfg, const Dataset& dataset) {
  if (dataset.feature_dim() != cfg.feature_dim) {
    throw ConfigError("config key 'feature_dim': dataset has " + std::to_string(dataset.feature_dim()) +
                      " feature columns, config says " + std::to_string(cfg.feature_dim));
  }
  if (dataset.classes != cfg.classes) throw ConfigError("config key 'classes': does not match dataset");
  const auto train_rows = dataset.rows_in(Split::kTrain);
  if (train_rows.empty()) throw ConfigError("dataset has no train rows");
}

AblationSummary::Stat summarize(const std::vector<double>& values) {
  AblationSummary::Stat stat;
  if (values.empty()) return stat;
  double total = 0.0;
  for (double v : values) total += v;
  stat.mean = total / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - stat.mean) * (v - stat.mean);
    stat.stdev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return stat;
}

}  // namespace

nlohmann::json Checkpoint::to_json() const {
  return {{"format", "rankprompt-checkpoint"},
          {"version", 1},
          {"epoch", epoch},
          {"params", params.to_json()},
          {"optimizer", optimizer.to_json()},
          {"sms", sms.to_json()},
          {"pipeline", pipeline_to_json(pipeline)}};
}

Checkpoint Checkpoint::from_json(const nlohmann::json& doc) {
  if (doc.at("format").get<std::string>() != "rankprompt-checkpoint") throw InvalidInput("not a checkpoint");
  Checkpoint ck;
  ck.epoch = doc.at("epoch").get<std::size_t>();
  ck.params = ModelParams::from_json(doc.at("params"));
  ck.optimizer = OptimizerState::from_json(doc.at("optimizer"));
  ck.sms = ClassStats::from_json(doc.at("sms"));
  ck.pipeline = pipeline_from_json(doc.at("pipeline"));
  if (ck.sms.k() != ck.params.hyper.classes) throw InvalidInput("SMS statistics disagree with model class count");
  return ck;
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch},
          {"main", main},
          {"rank", rank},
          {"total", total},
          {"train", {{"macro_f1", train_metrics.macro_f1},
                     {"macro_auc", train_metrics.macro_auc ? nlohmann::json(*train_metrics.macro_auc) : nullptr},
                     {"rank_monotonicity", train_metrics.rank_monotonicity}}}};
}

Checkpoint initial_checkpoint(const RunConfig& cfg, std::size_t feature_dim, std::uint64_t seed) {
  ModelHyper hyper = cfg.model_hyper();
  hyper.feature_dim = feature_dim;
  Checkpoint ck;
  ck.params = init_params(hyper, seed);
  ck.optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate, hyper);
  ck.sms = ClassStats(cfg.classes);
  ck.pipeline = cfg.pipeline();
  return ck;
}

TrainResult train_model(const RunConfig& cfg, const PipelineConfig& pipeline, const Dataset& dataset,
                        std::uint64_t seed) {
  check_dataset_matches(cfg, dataset);
  TrainResult result{initial_checkpoint(cfg, dataset.feature_dim(), seed), {}};
  Checkpoint& ck = result.checkpoint;
  ck.pipeline = pipeline;
  const KernelSpec kernel = cfg.kernel();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    CompensatedSum main_sum;
    CompensatedSum rank_sum;
    CompensatedSum total_sum;
    std::size_t seen = 0;
    for (const auto& batch : batch_iter(dataset, Split::kTrain, cfg.batch_size, seed, epoch)) {
      const Matrix features = dataset.gather_features(batch);
      const LabelVector labels = dataset.gather_labels(batch);
      auto step = model_backward(ck.params, features, labels, ck.sms, ck.pipeline);
      ck.sms.accumulate(step.raw_similarity, labels);
      optimizer_step(ck.params, step.grads, ck.optimizer);

      const auto n = static_cast<double>(batch.size());
      main_sum.add(step.report.main * n);
      rank_sum.add(step.report.rank * n);
      total_sum.add(step.report.total * n);
      seen += batch.size();
    }
    ck.sms.commit(kernel);
    ck.epoch = epoch + 1;

    EpochRecord record;
    record.epoch = epoch;
    record.main = main_sum.value() / static_cast<double>(seen);
    record.rank = rank_sum.value() / static_cast<double>(seen);
    record.total = total_sum.value() / static_cast<double>(seen);
    record.train_metrics = evaluate_split(ck, dataset, Split::kTrain, cfg.sms_at_inference);
    result.log.push_back(std::move(record));
  }
  return result;
}

SimilarityMatrix infer_similarity(const Checkpoint& checkpoint, const Matrix& features, bool sms_at_inference) {
  const auto& params = checkpoint.params;
  SimilarityMatrix raw = similarity_matrix(encode_images(params, features), EmbeddingMatrix(params.text),
                                           checkpoint.pipeline.normalize_embeddings);
  if (!(sms_at_inference && checkpoint.pipeline.sms_enabled && checkpoint.sms.committed())) return raw;
  const LabelVector guessed = predict(raw.values());
  return calibrate_rows(raw, guessed, checkpoint.sms, checkpoint.pipeline.sms_variant);
}

MetricsReport evaluate_split(const Checkpoint& checkpoint, const Dataset& dataset, Split split,
                             bool sms_at_inference) {
  const auto rows = dataset.rows_in(split);
  if (rows.empty()) throw InvalidInput("split '" + std::string(split_name(split)) + "' is empty");
  const auto s = infer_similarity(checkpoint, dataset.gather_features(rows), sms_at_inference);
  return evaluate(s, dataset.gather_labels(rows), checkpoint.pipeline.loss.tau);
}

ClassMeanSimilarity heatmap_split(const Checkpoint& checkpoint, const Dataset& dataset, Split split,
                                  bool sms_at_inference) {
  const auto rows = dataset.rows_in(split);
  if (rows.empty()) throw InvalidInput("split '" + std::string(split_name(split)) + "' is empty");
  const auto s = infer_similarity(checkpoint, dataset.gather_features(rows), sms_at_inference);
  return class_mean_similarity(s, dataset.gather_labels(rows), dataset.classes);
}

const AblationSummary::Variant& AblationSummary::variant(std::string_view name) const {
  for (const auto& v : variants)
    if (v.name == name) return v;
  throw InvalidInput("no ablation variant named '" + std::string(name) + "'");
}

nlohmann::json AblationSummary::to_json() const {
  auto stat = [](const Stat& s) { return nlohmann::json{{"mean", s.mean}, {"stdev", s.stdev}}; };
  nlohmann::json out;
  out["seeds"] = seeds;
  nlohmann::json vs = nlohmann::json::object();
  for (const auto& v : variants) {
    vs[v.name] = {{"macro_f1", stat(v.macro_f1)},
                  {"macro_auc", stat(v.macro_auc)},
                  {"rank_monotonicity", stat(v.rank_monotonicity)}};
  }
  out["variants"] = std::move(vs);
  return out;
}

AblationSummary run_ablation(const RunConfig& cfg, const Dataset& dataset) {
  struct Setting {
    const char* name;
    PipelineConfig pipeline;
  };
  std::vector<Setting> settings;
  settings.push_back({"full", cfg.pipeline()});
  settings.push_back({"without_rank", cfg.pipeline()});
  settings.back().pipeline.loss.lambda_rank = 0.0;
  settings.push_back({"without_main", cfg.pipeline()});
  settings.back().pipeline.loss.use_main = false;
  settings.push_back({"without_sms", cfg.pipeline()});
  settings.back().pipeline.sms_enabled = false;

  AblationSummary summary;
  for (std::size_t s = 0; s < cfg.ablation_seeds; ++s) summary.seeds.push_back(cfg.seed + s);

  for (const auto& setting : settings) {
    AblationSummary::Variant variant;
    variant.name = setting.name;
    std::vector<double> f1;
    std::vector<double> auc;
    std::vector<double> mono;
    for (const auto seed : summary.seeds) {
      const auto trained = train_model(cfg, setting.pipeline, dataset, seed);
      auto report = evaluate_split(trained.checkpoint, dataset, Split::kTest, cfg.sms_at_inference);
      f1.push_back(report.macro_f1);
      if (report.macro_auc) auc.push_back(*report.macro_auc);
      mono.push_back(report.rank_monotonicity);
      variant.runs.push_back(std::move(report));
    }
    variant.macro_f1 = summarize(f1);
    variant.macro_auc = summarize(auc);
    variant.rank_monotonicity = summarize(mono);
    summary.variants.push_back(std::move(variant));
  }
  return summary;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << file.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  file << content;
  if (!file) throw IoError("failed writing " + path.string());
}

std::filesystem::path cmd_generate(const RunConfig& cfg, const CommandOptions& opts) {
  const auto dir = output_dir(cfg, opts);
  const auto spec = cfg.dataset_spec();
  Dataset dataset;
  try {
    dataset = generate_synthetic(spec);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  const auto csv_path = dir / "dataset.csv";
  write_text_file(csv_path, to_csv(dataset));

  nlohmann::json meta;
  meta["spec"] = {{"classes", spec.classes},
                  {"samples", spec.samples},
                  {"feature_dim", spec.feature_dim},
                  {"class_sep", spec.class_sep},
                  {"noise_sigma", spec.noise_sigma},
                  {"imbalance_ratio", spec.imbalance_ratio}};
  meta["seed"] = spec.seed;
  meta["class_counts"] = class_counts(spec);
  meta["train_counts"] = dataset.class_counts(dataset.rows_in(Split::kTrain));
  meta["test_counts"] = dataset.class_counts(dataset.rows_in(Split::kTest));
  write_text_file(dir / "dataset.meta.json", meta.dump(2) + "\n");
  return csv_path;
}

std::filesystem::path cmd_train(const RunConfig& cfg, const CommandOptions& opts) {
  const auto dir = output_dir(cfg, opts);
  const auto dataset = load_dataset(opts.dataset.value_or(dir / "dataset.csv"), cfg.classes);
  const auto result = train_model(cfg, cfg.pipeline(), dataset, cfg.seed);

  std::string log;
  for (const auto& record : result.log) log += record.to_json().dump() + "\n";
  write_text_file(dir / "train_log.jsonl", log);
  const auto checkpoint_path = dir / "checkpoint.json";
  write_text_file(checkpoint_path, result.checkpoint.to_json().dump() + "\n");
  return checkpoint_path;
}

std::filesystem::path cmd_eval(const RunConfig& cfg, const CommandOptions& opts) {
  const auto dir = output_dir(cfg, opts);
  const auto checkpoint = load_checkpoint(opts.checkpoint.value_or(dir / "checkpoint.json"));
  const auto dataset =
      load_dataset(opts.dataset.value_or(dir / "dataset.csv"), checkpoint.params.hyper.classes);
  const auto report = evaluate_split(checkpoint, dataset, opts.split, cfg.sms_at_inference);
  const auto path = dir / "metrics.json";
  write_text_file(path, report.to_json().dump(2) + "\n");
  return path;
}

std::filesystem::path cmd_heatmap(const RunConfig& cfg, const CommandOptions& opts) {
  const auto dir = output_dir(cfg, opts);
  const auto checkpoint = load_checkpoint(opts.checkpoint.value_or(dir / "checkpoint.json"));
  const auto dataset =
      load_dataset(opts.dataset.value_or(dir / "dataset.csv"), checkpoint.params.hyper.classes);
  const auto heatmap = heatmap_split(checkpoint, dataset, opts.split, cfg.sms_at_inference);
  const auto path = dir / "heatmap.csv";
  write_text_file(path, heatmap_csv(heatmap));
  return path;
}

std::filesystem::path cmd_ablate(const RunConfig& cfg, const CommandOptions& opts) {
  const auto dir = output_dir(cfg, opts);
  Dataset dataset;
  if (opts.dataset) {
    dataset = load_dataset(*opts.dataset, cfg.classes);
  } else {
    try {
      dataset = generate_synthetic(cfg.dataset_spec());
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  }
  const auto summary = run_ablation(cfg, dataset);
  const auto path = dir / "ablation.json";
  write_text_file(path, summary.to_json().dump(2) + "\n");
  return path;
}

}  // namespace rankprompt
