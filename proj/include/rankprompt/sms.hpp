#pragma once

// Similarity Matrix Smooth: per-class statistics of similarity rows, smoothed
// across neighbouring grades by a Gaussian kernel and applied as a per-row
// affine calibration. Statistics gathered during one epoch are committed at its
// end and stay frozen for the whole next epoch.

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "rankprompt/core.hpp"

namespace rankprompt {

inline constexpr double kVarianceFloor = 1e-6;

/// Gaussian kernel over class-index distance.
struct KernelSpec {
  double sigma = 0.5;
  bool include_self = true;
  bool normalize = true;
};

enum class CalibrationVariant {
  kStandard,  ///< sqrt(Σ̃/Σ)·(s − μ) + μ̃
  kLiteral,   ///< sqrt(Σ̃)·sqrt(|μ̃|)·(s − μ) + μ̃
};

/// Weights of every class when smoothing class `j` among `k` classes.
std::vector<double> kernel_weights(const KernelSpec& spec, std::size_t j, std::size_t k);

/// Mean and floored population variance of the similarity rows of one class.
/// `mean` and `var` are empty when `count` is zero.
struct ClassMoments {
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> var;

  bool observed() const { return count > 0; }

  friend bool operator==(const ClassMoments&, const ClassMoments&) = default;
};

struct SmoothedMoments {
  /// False when fewer than two classes were observed; calibration is then skipped.
  bool enabled = false;
  /// Per class; empty for classes that have no observed neighbour to borrow from.
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> var;

  friend bool operator==(const SmoothedMoments&, const SmoothedMoments&) = default;
};

/// Kernel-weighted averages of the observed classes' moments. Unobserved classes
/// are dropped and the remaining weights renormalized when `spec.normalize`.
SmoothedMoments smooth_stats(std::span<const ClassMoments> classes, const KernelSpec& spec);

/// Running per-class similarity statistics plus the frozen snapshot from the last commit.
class ClassStats {
 public:
  explicit ClassStats(std::size_t k);

  std::size_t k() const { return k_; }
  /// Length of each similarity row; equals k().
  std::size_t dim() const { return k_; }

  /// Adds every row of `s` to the running sums of its labelled class.
  void accumulate(const SimilarityMatrix& s, std::span<const int> labels);

  /// Moments of the rows accumulated since the last commit.
  ClassMoments epoch_moments(std::size_t j) const;
  std::size_t epoch_samples() const;

  /// Freezes the current epoch's smoothed statistics and resets the running sums.
  /// No-op when nothing was accumulated.
  void commit(const KernelSpec& spec);

  bool committed() const { return committed_; }
  bool calibration_enabled() const { return committed_ && smoothed_.enabled; }
  const ClassMoments& committed_moments(std::size_t j) const;
  const SmoothedMoments& smoothed() const { return smoothed_; }

  /// True when rows of class `j` are transformed by calibrate_rows.
  bool calibrates_class(std::size_t j) const;

  nlohmann::json to_json() const;
  static ClassStats from_json(const nlohmann::json& doc);

  friend bool operator==(const ClassStats&, const ClassStats&) = default;

 private:
  std::size_t k_;
  std::vector<std::size_t> count_;
  std::vector<std::vector<CompensatedSum>> sum_;
  std::vector<std::vector<CompensatedSum>> sum_sq_;

  bool committed_ = false;
  std::vector<ClassMoments> frozen_;
  SmoothedMoments smoothed_;
};

ClassStats accumulate_class_stats(ClassStats stats, const SimilarityMatrix& s, std::span<const int> labels);
ClassStats commit_epoch(ClassStats stats, const KernelSpec& spec);

/// Per-entry affine map s̃ = scale ⊙ (s − center) + target.
struct RowCalibration {
  Matrix scale;
  Matrix center;
  Matrix target;
};

/// Calibration coefficients for rows whose class is given by `classes`.
/// Rows of classes without committed statistics map to themselves.
/// Throws StateError when `stats` has never been committed.
RowCalibration calibration_for(std::span<const int> classes, const ClassStats& stats,
                               CalibrationVariant variant);

SimilarityMatrix apply_calibration(const SimilarityMatrix& s, const RowCalibration& cal);

/// Calibrated copy of `s`; each row i is transformed with the statistics of class labels[i].
SimilarityMatrix calibrate_rows(const SimilarityMatrix& s, std::span<const int> labels, const ClassStats& stats,
                                CalibrationVariant variant);

}  // namespace rankprompt
