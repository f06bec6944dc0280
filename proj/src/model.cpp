#include "rankprompt/model.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace rankprompt {

void ModelHyper::validate() const {
  if (feature_dim == 0 || hidden_dim == 0 || embed_dim == 0) throw InvalidInput("model dimensions must be >= 1");
  if (classes < 2) throw InvalidInput("model needs at least two classes");
}

ModelParams ModelParams::zeros(const ModelHyper& hyper) {
  hyper.validate();
  return ModelParams{hyper,
                     Matrix(hyper.feature_dim, hyper.hidden_dim),
                     Matrix(1, hyper.hidden_dim),
                     Matrix(hyper.hidden_dim, hyper.embed_dim),
                     Matrix(1, hyper.embed_dim),
                     Matrix(hyper.classes, hyper.embed_dim)};
}

bool ModelParams::same_shape(const ModelParams& other) const {
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    if (a[t]->rows() != b[t]->rows() || a[t]->cols() != b[t]->cols()) return false;
  }
  return true;
}

bool ModelParams::all_finite() const {
  for (const Matrix* t : tensors())
    if (!t->all_finite()) return false;
  return true;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

Matrix matrix_from_json(const nlohmann::json& doc) {
  return Matrix(doc.at("rows").get<std::size_t>(), doc.at("cols").get<std::size_t>(),
                doc.at("data").get<std::vector<double>>());
}

nlohmann::json ModelParams::to_json() const {
  nlohmann::json doc;
  doc["hyper"] = {{"feature_dim", hyper.feature_dim},
                  {"hidden_dim", hyper.hidden_dim},
                  {"embed_dim", hyper.embed_dim},
                  {"classes", hyper.classes}};
  const auto ts = tensors();
  for (std::size_t t = 0; t < kTensorCount; ++t) doc[kTensorNames[t]] = matrix_to_json(*ts[t]);
  return doc;
}

ModelParams ModelParams::from_json(const nlohmann::json& doc) {
  const auto& h = doc.at("hyper");
  ModelHyper hyper{h.at("feature_dim").get<std::size_t>(), h.at("hidden_dim").get<std::size_t>(),
                   h.at("embed_dim").get<std::size_t>(), h.at("classes").get<std::size_t>()};
  ModelParams params = zeros(hyper);
  auto ts = params.tensors();
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    Matrix m = matrix_from_json(doc.at(kTensorNames[t]));
    if (m.rows() != ts[t]->rows() || m.cols() != ts[t]->cols()) {
      throw InvalidInput(std::string("parameter tensor '") + kTensorNames[t] + "' has the wrong shape");
    }
    *ts[t] = std::move(m);
  }
  if (!params.all_finite()) throw InvalidInput("parameters contain non-finite values");
  return params;
}

ModelParams init_params(const ModelHyper& hyper, std::uint64_t seed) {
  ModelParams params = ModelParams::zeros(hyper);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Matrix& m, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : m.values()) v = dist(rng);
  };
  fill(params.w1, hyper.feature_dim);
  fill(params.b1, hyper.feature_dim);
  fill(params.w2, hyper.hidden_dim);
  fill(params.b2, hyper.hidden_dim);
  fill(params.text, hyper.embed_dim);
  return params;
}

namespace {

struct EncoderActivations {
  Matrix hidden;     // tanh(X·W1 + b1)
  Matrix embedding;  // hidden·W2 + b2, before any normalization
};

EncoderActivations run_encoder(const ModelParams& params, const Matrix& features) {
  if (features.cols() != params.hyper.feature_dim) {
    throw InvalidInput("feature width " + std::to_string(features.cols()) + " does not match model input " +
                       std::to_string(params.hyper.feature_dim));
  }
  if (features.rows() == 0) throw InvalidInput("encoder needs at least one sample");
  EncoderActivations act;
  act.hidden = matmul(features, params.w1);
  for (std::size_t i = 0; i < act.hidden.rows(); ++i) {
    auto row = act.hidden.row(i);
    for (std::size_t h = 0; h < row.size(); ++h) row[h] = std::tanh(row[h] + params.b1(0, h));
  }
  act.embedding = matmul(act.hidden, params.w2);
  for (std::size_t i = 0; i < act.embedding.rows(); ++i) {
    auto row = act.embedding.row(i);
    for (std::size_t d = 0; d < row.size(); ++d) row[d] += params.b2(0, d);
  }
  return act;
}

// Backpropagates through u = e / ‖e‖ row-wise.
Matrix normalize_rows_backward(const Matrix& raw, const Matrix& grad_unit) {
  Matrix out(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    const auto e = raw.row(i);
    const auto g = grad_unit.row(i);
    const double norm = std::sqrt(std::inner_product(e.begin(), e.end(), e.begin(), 0.0));
    if (norm == 0.0) continue;
    const double dot = std::inner_product(g.begin(), g.end(), e.begin(), 0.0) / norm;
    auto o = out.row(i);
    for (std::size_t d = 0; d < e.size(); ++d) o[d] = (g[d] - dot * e[d] / norm) / norm;
  }
  return out;
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) out(0, c) += row[c];
  }
  return out;
}

RowCalibration identity_calibration(std::size_t m, std::size_t k) {
  return RowCalibration{Matrix(m, k, 1.0), Matrix(m, k), Matrix(m, k)};
}

}  // namespace

EmbeddingMatrix encode_images(const ModelParams& params, const Matrix& features, bool unit_normalize) {
  auto act = run_encoder(params, features);
  return EmbeddingMatrix(unit_normalize ? normalize_rows(act.embedding) : std::move(act.embedding));
}

ForwardResult forward(const ModelParams& params, const Matrix& features, std::span<const int> classes,
                      const ClassStats& sms, const PipelineConfig& cfg) {
  if (classes.size() != features.rows()) throw InvalidInput("class count does not match feature rows");
  if (sms.k() != params.hyper.classes) throw InvalidInput("SMS statistics and model disagree on class count");
  const EmbeddingMatrix images = encode_images(params, features);
  const EmbeddingMatrix texts(params.text);
  SimilarityMatrix raw = similarity_matrix(images, texts, cfg.normalize_embeddings);
  if (cfg.sms_enabled && sms.committed()) {
    RowCalibration cal = calibration_for(classes, sms, cfg.sms_variant);
    SimilarityMatrix calibrated = apply_calibration(raw, cal);
    return ForwardResult{std::move(raw), std::move(calibrated), std::move(cal)};
  }
  check_labels(classes, params.hyper.classes);
  SimilarityMatrix calibrated(raw.values(), false);
  return ForwardResult{std::move(raw), std::move(calibrated), identity_calibration(features.rows(), sms.k())};
}

double pipeline_loss(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                     const ClassStats& sms, const PipelineConfig& cfg) {
  const auto fwd = forward(params, features, labels, sms, cfg);
  const double main = main_loss(fwd.calibrated, labels, cfg.loss);
  const double rank = rank_loss(fwd.calibrated, labels, cfg.loss);
  return (cfg.loss.use_main ? main : 0.0) + cfg.loss.lambda_rank * rank;
}

BackwardResult model_backward(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                              const ClassStats& sms, const PipelineConfig& cfg) {
  if (labels.size() != features.rows()) throw InvalidInput("label count does not match feature rows");
  if (sms.k() != params.hyper.classes) throw InvalidInput("SMS statistics and model disagree on class count");
  const auto act = run_encoder(params, features);
  const Matrix& image_raw = act.embedding;
  const Matrix image = cfg.normalize_embeddings ? normalize_rows(image_raw) : image_raw;
  const Matrix text = cfg.normalize_embeddings ? normalize_rows(params.text) : params.text;

  SimilarityMatrix raw(matmul_bt(image, text));
  const RowCalibration cal = (cfg.sms_enabled && sms.committed())
                                 ? calibration_for(labels, sms, cfg.sms_variant)
                                 : identity_calibration(raw.m(), raw.k());
  const SimilarityMatrix calibrated = apply_calibration(raw, cal);

  BackwardResult out{ModelParams::zeros(params.hyper), total_loss(calibrated, labels, cfg.loss), std::move(raw)};

  // Calibration is affine per entry with frozen coefficients.
  Matrix grad_s = out.report.grad_similarity;
  for (std::size_t n = 0; n < grad_s.size(); ++n) grad_s.values()[n] *= cal.scale.values()[n];

  Matrix grad_image = matmul(grad_s, text);
  Matrix grad_text = matmul_at(grad_s, image);
  if (cfg.normalize_embeddings) {
    grad_image = normalize_rows_backward(image_raw, grad_image);
    grad_text = normalize_rows_backward(params.text, grad_text);
  }

  auto& g = out.grads;
  g.text = std::move(grad_text);
  g.w2 = matmul_at(act.hidden, grad_image);
  g.b2 = column_sums(grad_image);
  Matrix grad_pre = matmul_bt(grad_image, params.w2);
  for (std::size_t n = 0; n < grad_pre.size(); ++n) {
    const double h = act.hidden.values()[n];
    grad_pre.values()[n] *= 1.0 - h * h;
  }
  g.w1 = matmul_at(features, grad_pre);
  g.b1 = column_sums(grad_pre);
  return out;
}

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate, const ModelHyper& hyper) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidInput("learning rate must be positive");
  OptimizerState state;
  state.kind = kind;
  state.learning_rate = learning_rate;
  state.first_moment = ModelParams::zeros(hyper);
  state.second_moment = ModelParams::zeros(hyper);
  return state;
}

void optimizer_step(ModelParams& params, const ModelParams& grads, OptimizerState& state) {
  if (!params.same_shape(grads)) throw InvalidInput("optimizer_step: gradient shapes do not match parameters");
  if (state.kind == OptimizerKind::kAdam &&
      (!params.same_shape(state.first_moment) || !params.same_shape(state.second_moment))) {
    throw InvalidInput("optimizer_step: moment shapes do not match parameters");
  }
  ++state.step;
  auto p = params.tensors();
  const auto g = grads.tensors();

  if (state.kind == OptimizerKind::kSgd) {
    for (std::size_t t = 0; t < ModelParams::kTensorCount; ++t) {
      auto pv = p[t]->values();
      auto gv = g[t]->values();
      for (std::size_t n = 0; n < pv.size(); ++n) pv[n] -= state.learning_rate * gv[n];
    }
    return;
  }

  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  const double step = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, step);
  const double correction2 = 1.0 - std::pow(state.beta2, step);
  for (std::size_t t = 0; t < ModelParams::kTensorCount; ++t) {
    auto pv = p[t]->values();
    auto gv = g[t]->values();
    auto mv = m[t]->values();
    auto vv = v[t]->values();
    for (std::size_t n = 0; n < pv.size(); ++n) {
      mv[n] = state.beta1 * mv[n] + (1.0 - state.beta1) * gv[n];
      vv[n] = state.beta2 * vv[n] + (1.0 - state.beta2) * gv[n] * gv[n];
      const double m_hat = mv[n] / correction1;
      const double v_hat = vv[n] / correction2;
      pv[n] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

nlohmann::json OptimizerState::to_json() const {
  return {{"kind", kind == OptimizerKind::kSgd ? "sgd" : "adam"},
          {"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"step", step},
          {"first_moment", first_moment.to_json()},
          {"second_moment", second_moment.to_json()}};
}

OptimizerState OptimizerState::from_json(const nlohmann::json& doc) {
  OptimizerState state;
  const auto kind = doc.at("kind").get<std::string>();
  if (kind == "sgd") {
    state.kind = OptimizerKind::kSgd;
  } else if (kind == "adam") {
    state.kind = OptimizerKind::kAdam;
  } else {
    throw InvalidInput("unknown optimizer kind '" + kind + "'");
  }
  state.learning_rate = doc.at("learning_rate").get<double>();
  state.beta1 = doc.at("beta1").get<double>();
  state.beta2 = doc.at("beta2").get<double>();
  state.epsilon = doc.at("epsilon").get<double>();
  state.step = doc.at("step").get<std::uint64_t>();
  state.first_moment = ModelParams::from_json(doc.at("first_moment"));
  state.second_moment = ModelParams::from_json(doc.at("second_moment"));
  return state;
}

}  // namespace rankprompt
