#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rankprompt {

/// Raised when an argument violates an operation's preconditions.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an object is used in a state that does not allow the call.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  Matrix transposed() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * bᵀ
Matrix matmul_bt(const Matrix& a, const Matrix& b);
/// aᵀ * b
Matrix matmul_at(const Matrix& a, const Matrix& b);

/// Image (M×D) or class-text (K×D) embeddings. Always non-empty and finite.
class EmbeddingMatrix {
 public:
  explicit EmbeddingMatrix(Matrix values);

  std::size_t rows() const { return values_.rows(); }
  std::size_t dim() const { return values_.cols(); }
  const Matrix& values() const { return values_; }

 private:
  Matrix values_;
};

/// M×K image-to-class similarity scores, raw or calibrated.
class SimilarityMatrix {
 public:
  SimilarityMatrix(Matrix values, bool calibrated = false);

  std::size_t m() const { return values_.rows(); }
  std::size_t k() const { return values_.cols(); }
  bool calibrated() const { return calibrated_; }
  const Matrix& values() const { return values_; }
  std::span<const double> row(std::size_t i) const { return values_.row(i); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }

 private:
  Matrix values_;
  bool calibrated_;
};

/// 0-based class index per sample.
using LabelVector = std::vector<int>;

/// Throws InvalidInput unless every label lies in [0, k).
void check_labels(std::span<const int> labels, std::size_t k);

/// Display name of a DR grade (0 normal ... 4 proliferative); "class<j>" beyond that.
std::string grade_name(int index);

/// Row-wise L2 normalization; rows with zero norm are left at zero.
Matrix normalize_rows(const Matrix& m);

/// S = X·Tᵀ, optionally on unit-normalized rows.
SimilarityMatrix similarity_matrix(const EmbeddingMatrix& images, const EmbeddingMatrix& texts,
                                   bool unit_normalize = false);

/// Numerically stable softmax of `row / tau`.
std::vector<double> softmax(std::span<const double> row, double tau);
/// log of softmax(row / tau), computed via log-sum-exp.
std::vector<double> log_softmax(std::span<const double> row, double tau);

/// Row-stochastic matrix of per-row softmax(s / tau).
Matrix softmax_rows(const SimilarityMatrix& s, double tau);
Matrix softmax_rows(const Matrix& s, double tau);

inline constexpr double kKlFloor = 1e-12;

/// KL(p ‖ q) with 0·ln 0 = 0 and q floored at kKlFloor.
double kl_divergence_row(std::span<const double> p, std::span<const double> q);

/// M×K indicator matrix with a single 1 per row at the label.
Matrix one_hot(std::span<const int> labels, std::size_t k);

/// log(1 + exp(x)) without overflow.
double softplus(double x);
/// Logistic function 1 / (1 + exp(-x)).
double sigmoid(double x);

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

  friend bool operator==(const CompensatedSum&, const CompensatedSum&) = default;

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

}  // namespace rankprompt
