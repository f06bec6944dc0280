#include "rankprompt/sms.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rankprompt {

std::vector<double> kernel_weights(const KernelSpec& spec, std::size_t j, std::size_t k) {
  if (k < 2) throw InvalidInput("kernel_weights: need at least two classes");
  if (j >= k) throw InvalidInput("kernel_weights: class index out of range");
  if (!(spec.sigma > 0.0)) throw InvalidInput("kernel_weights: sigma must be positive");

  std::vector<double> w(k);
  for (std::size_t other = 0; other < k; ++other) {
    if (other == j && !spec.include_self) continue;
    const double d = static_cast<double>(j) - static_cast<double>(other);
    w[other] = std::exp(-d * d / (2.0 * spec.sigma * spec.sigma));
  }
  if (spec.normalize) {
    double total = 0.0;
    for (double v : w) total += v;
    if (total > 0.0)
      for (double& v : w) v /= total;
  }
  return w;
}

SmoothedMoments smooth_stats(std::span<const ClassMoments> classes, const KernelSpec& spec) {
  const std::size_t k = classes.size();
  SmoothedMoments out;
  out.mean.resize(k);
  out.var.resize(k);

  const auto observed = std::count_if(classes.begin(), classes.end(), [](const auto& c) { return c.observed(); });
  if (observed < 2) return out;
  out.enabled = true;

  for (std::size_t j = 0; j < k; ++j) {
    auto w = kernel_weights(spec, j, k);
    double total = 0.0;
    for (std::size_t other = 0; other < k; ++other) {
      if (!classes[other].observed()) w[other] = 0.0;
      total += w[other];
    }
    if (total == 0.0) continue;
    if (spec.normalize)
      for (double& v : w) v /= total;

    const std::size_t dim = std::find_if(classes.begin(), classes.end(), [](const auto& c) {
                              return c.observed();
                            })->mean.size();
    std::vector<double> mean(dim, 0.0);
    std::vector<double> var(dim, 0.0);
    for (std::size_t other = 0; other < k; ++other) {
      if (w[other] == 0.0) continue;
      for (std::size_t c = 0; c < dim; ++c) {
        mean[c] += w[other] * classes[other].mean[c];
        var[c] += w[other] * classes[other].var[c];
      }
    }
    out.mean[j] = std::move(mean);
    out.var[j] = std::move(var);
  }
  return out;
}

ClassStats::ClassStats(std::size_t k)
    : k_(k),
      count_(k, 0),
      sum_(k, std::vector<CompensatedSum>(k)),
      sum_sq_(k, std::vector<CompensatedSum>(k)),
      frozen_(k) {
  if (k < 2) throw InvalidInput("ClassStats: need at least two classes");
}

void ClassStats::accumulate(const SimilarityMatrix& s, std::span<const int> labels) {
  if (s.k() != k_) {
    throw InvalidInput("accumulate: similarity width " + std::to_string(s.k()) + " != " + std::to_string(k_));
  }
  if (labels.size() != s.m()) throw InvalidInput("accumulate: label count does not match similarity rows");
  check_labels(labels, k_);
  for (std::size_t i = 0; i < s.m(); ++i) {
    const auto j = static_cast<std::size_t>(labels[i]);
    ++count_[j];
    const auto row = s.row(i);
    for (std::size_t c = 0; c < k_; ++c) {
      sum_[j][c].add(row[c]);
      sum_sq_[j][c].add(row[c] * row[c]);
    }
  }
}

ClassMoments ClassStats::epoch_moments(std::size_t j) const {
  if (j >= k_) throw InvalidInput("epoch_moments: class index out of range");
  ClassMoments m;
  m.count = count_[j];
  if (m.count == 0) return m;
  const auto n = static_cast<double>(m.count);
  m.mean.resize(k_);
  m.var.resize(k_);
  for (std::size_t c = 0; c < k_; ++c) {
    const double mean = sum_[j][c].value() / n;
    m.mean[c] = mean;
    m.var[c] = std::max(sum_sq_[j][c].value() / n - mean * mean, kVarianceFloor);
  }
  return m;
}

std::size_t ClassStats::epoch_samples() const {
  std::size_t total = 0;
  for (auto n : count_) total += n;
  return total;
}

void ClassStats::commit(const KernelSpec& spec) {
  if (epoch_samples() == 0) return;
  for (std::size_t j = 0; j < k_; ++j) frozen_[j] = epoch_moments(j);
  smoothed_ = smooth_stats(frozen_, spec);
  committed_ = true;
  std::fill(count_.begin(), count_.end(), 0);
  for (auto& row : sum_) std::fill(row.begin(), row.end(), CompensatedSum{});
  for (auto& row : sum_sq_) std::fill(row.begin(), row.end(), CompensatedSum{});
}

const ClassMoments& ClassStats::committed_moments(std::size_t j) const {
  if (j >= k_) throw InvalidInput("committed_moments: class index out of range");
  return frozen_[j];
}

bool ClassStats::calibrates_class(std::size_t j) const {
  return calibration_enabled() && j < k_ && frozen_[j].observed() && !smoothed_.mean[j].empty();
}

nlohmann::json ClassStats::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t j = 0; j < k_; ++j) {
    nlohmann::json c;
    c["count"] = frozen_[j].count;
    c["mean"] = frozen_[j].mean;
    c["var"] = frozen_[j].var;
    c["smoothed_mean"] = smoothed_.mean.empty() ? std::vector<double>{} : smoothed_.mean[j];
    c["smoothed_var"] = smoothed_.var.empty() ? std::vector<double>{} : smoothed_.var[j];
    classes.push_back(std::move(c));
  }
  return {{"k", k_},
          {"dim", k_},
          {"committed", committed_},
          {"calibration_enabled", smoothed_.enabled},
          {"classes", std::move(classes)}};
}

ClassStats ClassStats::from_json(const nlohmann::json& doc) {
  const auto k = doc.at("k").get<std::size_t>();
  if (doc.at("dim").get<std::size_t>() != k) throw InvalidInput("class stats: dim must equal k");
  ClassStats stats(k);
  const auto& classes = doc.at("classes");
  if (classes.size() != k) throw InvalidInput("class stats: expected one entry per class");
  stats.committed_ = doc.at("committed").get<bool>();
  if (!stats.committed_) return stats;

  stats.smoothed_.enabled = doc.at("calibration_enabled").get<bool>();
  stats.smoothed_.mean.resize(k);
  stats.smoothed_.var.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto& c = classes[j];
    auto& m = stats.frozen_[j];
    m.count = c.at("count").get<std::size_t>();
    m.mean = c.at("mean").get<std::vector<double>>();
    m.var = c.at("var").get<std::vector<double>>();
    stats.smoothed_.mean[j] = c.at("smoothed_mean").get<std::vector<double>>();
    stats.smoothed_.var[j] = c.at("smoothed_var").get<std::vector<double>>();
    const std::size_t expected = m.count > 0 ? k : 0;
    if (m.mean.size() != expected || m.var.size() != expected) {
      throw InvalidInput("class stats: class " + std::to_string(j) + " has malformed moments");
    }
    const auto& sm = stats.smoothed_.mean[j];
    if ((!sm.empty() && sm.size() != k) || stats.smoothed_.var[j].size() != sm.size()) {
      throw InvalidInput("class stats: class " + std::to_string(j) + " has malformed smoothed moments");
    }
  }
  return stats;
}

ClassStats accumulate_class_stats(ClassStats stats, const SimilarityMatrix& s, std::span<const int> labels) {
  stats.accumulate(s, labels);
  return stats;
}

ClassStats commit_epoch(ClassStats stats, const KernelSpec& spec) {
  stats.commit(spec);
  return stats;
}

RowCalibration calibration_for(std::span<const int> classes, const ClassStats& stats, CalibrationVariant variant) {
  if (!stats.committed()) throw StateError("calibration requires committed class statistics");
  const std::size_t k = stats.k();
  check_labels(classes, k);

  // Coefficients depend only on the class, so build them once per class.
  std::vector<std::vector<double>> scale(k, std::vector<double>(k, 1.0));
  std::vector<std::vector<double>> center(k, std::vector<double>(k, 0.0));
  std::vector<std::vector<double>> target(k, std::vector<double>(k, 0.0));
  for (std::size_t j = 0; j < k; ++j) {
    if (!stats.calibrates_class(j)) continue;
    const auto& raw = stats.committed_moments(j);
    const auto& mu_s = stats.smoothed().mean[j];
    const auto& var_s = stats.smoothed().var[j];
    for (std::size_t c = 0; c < k; ++c) {
      double a = 0.0;
      switch (variant) {
        case CalibrationVariant::kStandard:
          a = std::sqrt(var_s[c] / raw.var[c]);
          break;
        case CalibrationVariant::kLiteral:
          a = std::sqrt(var_s[c]) * std::sqrt(std::abs(mu_s[c]));
          break;
      }
      scale[j][c] = a;
      center[j][c] = raw.mean[c];
      target[j][c] = mu_s[c];
    }
  }

  RowCalibration cal{Matrix(classes.size(), k), Matrix(classes.size(), k), Matrix(classes.size(), k)};
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto j = static_cast<std::size_t>(classes[i]);
    std::copy(scale[j].begin(), scale[j].end(), cal.scale.row(i).begin());
    std::copy(center[j].begin(), center[j].end(), cal.center.row(i).begin());
    std::copy(target[j].begin(), target[j].end(), cal.target.row(i).begin());
  }
  return cal;
}

SimilarityMatrix apply_calibration(const SimilarityMatrix& s, const RowCalibration& cal) {
  if (cal.scale.rows() != s.m() || cal.scale.cols() != s.k()) {
    throw InvalidInput("apply_calibration: coefficient shape does not match similarity matrix");
  }
  Matrix out(s.m(), s.k());
  for (std::size_t i = 0; i < s.m(); ++i) {
    for (std::size_t c = 0; c < s.k(); ++c) {
      out(i, c) = cal.scale(i, c) * (s(i, c) - cal.center(i, c)) + cal.target(i, c);
    }
  }
  return SimilarityMatrix(std::move(out), true);
}

SimilarityMatrix calibrate_rows(const SimilarityMatrix& s, std::span<const int> labels, const ClassStats& stats,
                                CalibrationVariant variant) {
  if (labels.size() != s.m()) throw InvalidInput("calibrate_rows: label count does not match similarity rows");
  if (s.k() != stats.k()) throw InvalidInput("calibrate_rows: similarity width does not match statistics");
  return apply_calibration(s, calibration_for(labels, stats, variant));
}

}  // namespace rankprompt
