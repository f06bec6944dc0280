#pragma once

#include <cstddef>
#include <span>

#include "rankprompt/core.hpp"

namespace rankprompt {

struct LossConfig {
  /// Temperature shared by both softmax normalizations and the pairwise logistic terms.
  double tau = 1.0;
  double lambda_rank = 1.0;
  /// When false the main term is left out of the total (rank-only training).
  bool use_main = true;

  void validate() const;
};

struct LossReport {
  double main = 0.0;
  double rank = 0.0;
  double total = 0.0;
  /// ∂total/∂s̃, M×K.
  Matrix grad_similarity;
};

enum class RankDirection { kRightward, kLeftward };

/// Mean over images of KL(one-hot ‖ softmax(row / τ)).
double text_to_image_loss(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg);

/// Mean over the classes present in the batch of KL(uniform over that class's
/// images ‖ softmax over images of the class column / τ). Absent classes are skipped.
double image_to_text_loss(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg);

/// ½ (image_to_text_loss + text_to_image_loss).
double main_loss(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg);

/// Sum of −ln σ((row[a] − row[b]) / τ) over the neighbour pairs on one side of `true_class`.
/// Rightward pairs are (j, j+1) for j = true_class … K−2; leftward pairs are (j, j−1)
/// for j = 1 … true_class.
double rank_directional_loss(std::span<const double> row, std::size_t true_class, RankDirection direction,
                             double tau);

/// Mean over images of the rightward plus leftward directional losses.
double rank_loss(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg);

/// Loss values together with the analytic gradient of the total.
LossReport total_loss(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg);

Matrix grad_total_wrt_similarity(const SimilarityMatrix& s_cal, std::span<const int> labels,
                                 const LossConfig& cfg);

// Per-term gradients with respect to s̃, exposed for gradient checking.
Matrix grad_text_to_image(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg);
Matrix grad_image_to_text(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg);
Matrix grad_main(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg);
Matrix grad_rank(const SimilarityMatrix& s_cal, std::span<const int> labels, const LossConfig& cfg);

}  // namespace rankprompt
