#include "rankprompt/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace rankprompt {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': invalid value '" + std::string(value) + "' (expected " +
                    std::string(expected) + ")");
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, std::string_view expected) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (value.empty() || res.ec != std::errc{} || res.ptr != end) bad_value(key, value, expected);
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value, "true or false");
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

template <typename T>
Setter count_setter(T RunConfig::*field) {
  return [field](RunConfig& c, std::string_view key, std::string_view value) {
    c.*field = parse_number<T>(key, value, "a nonnegative integer");
  };
}

Setter real_setter(double RunConfig::*field) {
  return [field](RunConfig& c, std::string_view key, std::string_view value) {
    const double v = parse_number<double>(key, value, "a real number");
    if (!std::isfinite(v)) bad_value(key, value, "a finite real number");
    c.*field = v;
  };
}

Setter bool_setter(bool RunConfig::*field) {
  return [field](RunConfig& c, std::string_view key, std::string_view value) { c.*field = parse_bool(key, value); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"seed", count_setter(&RunConfig::seed)},
      {"classes", count_setter(&RunConfig::classes)},
      {"samples", count_setter(&RunConfig::samples)},
      {"feature_dim", count_setter(&RunConfig::feature_dim)},
      {"class_sep", real_setter(&RunConfig::class_sep)},
      {"noise_sigma", real_setter(&RunConfig::noise_sigma)},
      {"imbalance_ratio", real_setter(&RunConfig::imbalance_ratio)},
      {"embed_dim", count_setter(&RunConfig::embed_dim)},
      {"hidden_dim", count_setter(&RunConfig::hidden_dim)},
      {"epochs", count_setter(&RunConfig::epochs)},
      {"batch_size", count_setter(&RunConfig::batch_size)},
      {"optimizer",
       [](RunConfig& c, std::string_view key, std::string_view value) {
         if (value == "sgd") {
           c.optimizer = OptimizerKind::kSgd;
         } else if (value == "adam") {
           c.optimizer = OptimizerKind::kAdam;
         } else {
           bad_value(key, value, "sgd or adam");
         }
       }},
      {"learning_rate", real_setter(&RunConfig::learning_rate)},
      {"tau", real_setter(&RunConfig::tau)},
      {"lambda_rank", real_setter(&RunConfig::lambda_rank)},
      {"sms_enabled", bool_setter(&RunConfig::sms_enabled)},
      {"sms_variant",
       [](RunConfig& c, std::string_view key, std::string_view value) {
         if (value == "standard") {
           c.sms_variant = CalibrationVariant::kStandard;
         } else if (value == "literal") {
           c.sms_variant = CalibrationVariant::kLiteral;
         } else {
           bad_value(key, value, "standard or literal");
         }
       }},
      {"sms_sigma", real_setter(&RunConfig::sms_sigma)},
      {"sms_include_self", bool_setter(&RunConfig::sms_include_self)},
      {"sms_at_inference", bool_setter(&RunConfig::sms_at_inference)},
      {"normalize_embeddings", bool_setter(&RunConfig::normalize_embeddings)},
      {"ablation_seeds", count_setter(&RunConfig::ablation_seeds)},
      {"out_dir",
       [](RunConfig& c, std::string_view key, std::string_view value) {
         if (value.empty()) bad_value(key, value, "a directory path");
         c.out_dir = std::string(value);
       }},
  };
  return table;
}

void require(bool ok, const char* key, const std::string& why) {
  if (!ok) throw ConfigError(std::string("config key '") + key + "': " + why);
}

}  // namespace

void RunConfig::validate() const {
  require(classes >= 2, "classes", "must be >= 2");
  require(samples >= 2 * classes, "samples", "must be >= 2 * classes");
  require(feature_dim >= 1, "feature_dim", "must be >= 1");
  require(class_sep > 0.0, "class_sep", "must be > 0");
  require(noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
  require(imbalance_ratio >= 1.0, "imbalance_ratio", "must be >= 1");
  require(embed_dim >= 1, "embed_dim", "must be >= 1");
  require(hidden_dim >= 1, "hidden_dim", "must be >= 1");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(learning_rate > 0.0, "learning_rate", "must be > 0");
  require(tau > 0.0, "tau", "must be > 0");
  require(lambda_rank >= 0.0, "lambda_rank", "must be >= 0");
  require(sms_sigma > 0.0, "sms_sigma", "must be > 0");
  require(ablation_seeds >= 1, "ablation_seeds", "must be >= 1");
}

DatasetSpec RunConfig::dataset_spec() const {
  return DatasetSpec{classes, samples, feature_dim, class_sep, noise_sigma, imbalance_ratio, seed};
}

ModelHyper RunConfig::model_hyper() const { return ModelHyper{feature_dim, hidden_dim, embed_dim, classes}; }

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig p;
  p.loss.tau = tau;
  p.loss.lambda_rank = lambda_rank;
  p.normalize_embeddings = normalize_embeddings;
  p.sms_enabled = sms_enabled;
  p.sms_variant = sms_variant;
  return p;
}

KernelSpec RunConfig::kernel() const { return KernelSpec{sms_sigma, sms_include_self, true}; }

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  for (std::size_t start = 0; start <= text.size();) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(start, end - start);
    start = end + 1;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError("config key '" + std::string(key) + "' given more than once");
    }
    it->second(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << file.rdbuf();
  return parse_config(buf.str());
}

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

std::string_view variant_name(CalibrationVariant variant) {
  return variant == CalibrationVariant::kStandard ? "standard" : "literal";
}

std::string to_config_text(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  auto flag = [](bool b) { return b ? "true" : "false"; };
  out << "seed = " << cfg.seed << '\n'
      << "classes = " << cfg.classes << '\n'
      << "samples = " << cfg.samples << '\n'
      << "feature_dim = " << cfg.feature_dim << '\n'
      << "class_sep = " << cfg.class_sep << '\n'
      << "noise_sigma = " << cfg.noise_sigma << '\n'
      << "imbalance_ratio = " << cfg.imbalance_ratio << '\n'
      << "embed_dim = " << cfg.embed_dim << '\n'
      << "hidden_dim = " << cfg.hidden_dim << '\n'
      << "epochs = " << cfg.epochs << '\n'
      << "batch_size = " << cfg.batch_size << '\n'
      << "optimizer = " << optimizer_name(cfg.optimizer) << '\n'
      << "learning_rate = " << cfg.learning_rate << '\n'
      << "tau = " << cfg.tau << '\n'
      << "lambda_rank = " << cfg.lambda_rank << '\n'
      << "sms_enabled = " << flag(cfg.sms_enabled) << '\n'
      << "sms_variant = " << variant_name(cfg.sms_variant) << '\n'
      << "sms_sigma = " << cfg.sms_sigma << '\n'
      << "sms_include_self = " << flag(cfg.sms_include_self) << '\n'
      << "sms_at_inference = " << flag(cfg.sms_at_inference) << '\n'
      << "normalize_embeddings = " << flag(cfg.normalize_embeddings) << '\n'
      << "ablation_seeds = " << cfg.ablation_seeds << '\n'
      << "out_dir = " << cfg.out_dir.string() << '\n';
  return out.str();
}

void apply_env_overrides(RunConfig& cfg) {
  const char* env = std::getenv("RANKPROMPT_SEED");
  if (env == nullptr) return;
  cfg.seed = parse_number<std::uint64_t>("RANKPROMPT_SEED", env, "a nonnegative integer");
}

}  // namespace rankprompt
