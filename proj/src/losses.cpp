#include "rankprompt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace rankprompt {

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("tau must be positive");
  if (!(lambda_rank >= 0.0) || !std::isfinite(lambda_rank)) throw InvalidInput("lambda_rank must be nonnegative");
}

namespace {

void check_inputs(const SimilarityMatrix& s, std::span<const int> labels, const LossConfig& cfg) {
  cfg.validate();
  if (labels.size() != s.m()) {
    throw InvalidInput("label count " + std::to_string(labels.size()) + " does not match " +
                       std::to_string(s.m()) + " similarity rows");
  }
  check_labels(labels, s.k());
}

std::vector<std::vector<std::size_t>> members_by_class(std::span<const int> labels, std::size_t k) {
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  return members;
}

std::vector<double> column(const SimilarityMatrix& s, std::size_t j) {
  std::vector<double> out(s.m());
  for (std::size_t i = 0; i < s.m(); ++i) out[i] = s(i, j);
  return out;
}

// Visits every neighbour pair (winner, loser) that the rank loss asks to be ordered.
template <typename Fn>
void for_each_rank_pair(std::size_t k, std::size_t true_class, RankDirection direction, Fn&& fn) {
  if (direction == RankDirection::kRightward) {
    for (std::size_t j = true_class; j + 1 < k; ++j) fn(j, j + 1);
  } else {
    for (std::size_t j = 1; j <= true_class; ++j) fn(j, j - 1);
  }
}

}  // namespace

double text_to_image_loss(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg) {
  check_inputs(s_cal, labels, cfg);
  CompensatedSum total;
  for (std::size_t i = 0; i < s_cal.m(); ++i) {
    const auto logq = log_softmax(s_cal.row(i), cfg.tau);
    total.add(-logq[static_cast<std::size_t>(labels[i])]);
  }
  return std::max(total.value() / static_cast<double>(s_cal.m()), 0.0);
}

Matrix grad_text_to_image(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg) {
  check_inputs(s_cal, labels, cfg);
  Matrix grad(s_cal.m(), s_cal.k());
  const double scale = 1.0 / (static_cast<double>(s_cal.m()) * cfg.tau);
  for (std::size_t i = 0; i < s_cal.m(); ++i) {
    const auto q = softmax(s_cal.row(i), cfg.tau);
    for (std::size_t j = 0; j < s_cal.k(); ++j) {
      const double target = static_cast<int>(j) == labels[i] ? 1.0 : 0.0;
      grad(i, j) = (q[j] - target) * scale;
    }
  }
  return grad;
}

double image_to_text_loss(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg) {
  check_inputs(s_cal, labels, cfg);
  const auto members = members_by_class(labels, s_cal.k());
  CompensatedSum total;
  std::size_t retained = 0;
  for (std::size_t j = 0; j < s_cal.k(); ++j) {
    if (members[j].empty()) continue;
    ++retained;
    const auto logq = log_softmax(column(s_cal, j), cfg.tau);
    const auto n = static_cast<double>(members[j].size());
    // KL(p ‖ q) with p uniform over the class members: −ln n − mean(log q over members).
    CompensatedSum cross;
    for (std::size_t i : members[j]) cross.add(logq[i]);
    total.add(-std::log(n) - cross.value() / n);
  }
  return std::max(total.value() / static_cast<double>(retained), 0.0);
}

Matrix grad_image_to_text(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg) {
  check_inputs(s_cal, labels, cfg);
  const auto members = members_by_class(labels, s_cal.k());
  const auto retained = std::count_if(members.begin(), members.end(), [](const auto& m) { return !m.empty(); });
  Matrix grad(s_cal.m(), s_cal.k());
  const double scale = 1.0 / (static_cast<double>(retained) * cfg.tau);
  for (std::size_t j = 0; j < s_cal.k(); ++j) {
    if (members[j].empty()) continue;
    const auto q = softmax(column(s_cal, j), cfg.tau);
    const double target = 1.0 / static_cast<double>(members[j].size());
    for (std::size_t i = 0; i < s_cal.m(); ++i) grad(i, j) = q[i] * scale;
    for (std::size_t i : members[j]) grad(i, j) -= target * scale;
  }
  return grad;
}

double main_loss(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg) {
  return 0.5 * (image_to_text_loss(s_cal, labels, cfg) + text_to_image_loss(s_cal, labels, cfg));
}

Matrix grad_main(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg) {
  Matrix grad = grad_image_to_text(s_cal, labels, cfg);
  const Matrix t2i = grad_text_to_image(s_cal, labels, cfg);
  auto g = grad.values();
  auto t = t2i.values();
  for (std::size_t n = 0; n < g.size(); ++n) g[n] = 0.5 * (g[n] + t[n]);
  return grad;
}

double rank_directional_loss(std::span<const double> row, std::size_t true_class, RankDirection direction,
                             double tau) {
  if (true_class >= row.size()) throw InvalidInput("rank_directional_loss: class index out of range");
  if (!(tau > 0.0)) throw InvalidInput("rank_directional_loss: tau must be positive");
  CompensatedSum total;
  for_each_rank_pair(row.size(), true_class, direction, [&](std::size_t winner, std::size_t loser) {
    // −ln σ(Δ/τ) = softplus(−Δ/τ)
    total.add(softplus(-(row[winner] - row[loser]) / tau));
  });
  return total.value();
}

double rank_loss(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg) {
  check_inputs(s_cal, labels, cfg);
  CompensatedSum total;
  for (std::size_t i = 0; i < s_cal.m(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    total.add(rank_directional_loss(s_cal.row(i), c, RankDirection::kRightward, cfg.tau));
    total.add(rank_directional_loss(s_cal.row(i), c, RankDirection::kLeftward, cfg.tau));
  }
  return total.value() / static_cast<double>(s_cal.m());
}

Matrix grad_rank(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg) {
  check_inputs(s_cal, labels, cfg);
  Matrix grad(s_cal.m(), s_cal.k());
  const double inv_m = 1.0 / static_cast<double>(s_cal.m());
  for (std::size_t i = 0; i < s_cal.m(); ++i) {
    const auto row = s_cal.row(i);
    const auto c = static_cast<std::size_t>(labels[i]);
    auto accumulate = [&](std::size_t winner, std::size_t loser) {
      // d softplus(−Δ/τ) / dΔ = (σ(Δ/τ) − 1) / τ
      const double g = (sigmoid((row[winner] - row[loser]) / cfg.tau) - 1.0) / cfg.tau * inv_m;
      grad(i, winner) += g;
      grad(i, loser) -= g;
    };
    for_each_rank_pair(s_cal.k(), c, RankDirection::kRightward, accumulate);
    for_each_rank_pair(s_cal.k(), c, RankDirection::kLeftward, accumulate);
  }
  return grad;
}

LossReport total_loss(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg) {
  LossReport report;
  report.main = main_loss(s_cal, labels, cfg);
  report.rank = rank_loss(s_cal, labels, cfg);
  report.total = (cfg.use_main ? report.main : 0.0) + cfg.lambda_rank * report.rank;
  report.grad_similarity = grad_total_wrt_similarity(s_cal, labels, cfg);
  return report;
}

Matrix grad_total_wrt_similarity(const SimilarityMatrix& s_cal, std::span<const int> labels,
                                 const LossConfig& cfg) {
  Matrix grad = cfg.use_main ? grad_main(s_cal, labels, cfg) : Matrix(s_cal.m(), s_cal.k());
  if (cfg.lambda_rank != 0.0) {
    const Matrix r = grad_rank(s_cal, labels, cfg);
    auto g = grad.values();
    auto rv = r.values();
    for (std::size_t n = 0; n < g.size(); ++n) g[n] += cfg.lambda_rank * rv[n];
  }
  return grad;
}

}  // namespace rankprompt
