#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankprompt/core.hpp"

namespace rankprompt {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

/// Row-wise argmax; ties go to the lowest class index.
LabelVector predict(const Matrix& scores);

/// confusion[truth][prediction]
ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> truth, std::size_t k);

/// Unweighted mean of per-class F1 over all k classes. A 0/0 precision or recall counts as 0.
double macro_f1(std::span<const int> predictions, std::span<const int> truth, std::size_t k);

/// Mann-Whitney AUC of `scores` separating labels == positive_label from the rest, with
/// midranks for ties. Nullopt unless both groups are non-empty.
std::optional<double> binary_auc(std::span<const double> scores, std::span<const int> labels, int positive_label);

struct AucResult {
  /// Nullopt when fewer than two classes occur in `truth`.
  std::optional<double> macro;
  /// Nullopt for classes absent from `truth`.
  std::vector<std::optional<double>> per_class;
};

/// One-vs-rest AUC of each score column against truth == j.
AucResult auc_macro_ovr(const Matrix& scores, std::span<const int> truth, std::size_t k);

/// Fraction of rows strictly increasing up to and strictly decreasing after the true class.
double rank_monotonicity(const SimilarityMatrix& s, std::span<const int> truth);

/// True when `row` is strictly unimodal with its peak at `peak`.
bool strictly_unimodal_at(std::span<const double> row, std::size_t peak);

struct ClassMeanSimilarity {
  Matrix means;               ///< K×K; row c averages the rows of samples of class c
  std::vector<bool> present;  ///< false rows have no samples and are left at zero
};

ClassMeanSimilarity class_mean_similarity(const SimilarityMatrix& s, std::span<const int> truth, std::size_t k);

/// `true_class,s0,…,s{K−1}` with one row per class; absent classes have empty cells.
std::string heatmap_csv(const ClassMeanSimilarity& heatmap);

struct MetricsReport {
  double macro_f1 = 0.0;
  std::optional<double> macro_auc;
  std::vector<std::optional<double>> per_class_auc;
  double rank_monotonicity = 0.0;
  ConfusionMatrix confusion;
  std::size_t n_eval = 0;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& doc);
};

/// All metrics for one split. Scores are the row softmax of `s` at temperature `tau`.
MetricsReport evaluate(const SimilarityMatrix& s, std::span<const int> truth, double tau);

}  // namespace rankprompt
