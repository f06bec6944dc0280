#include "rankprompt/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace rankprompt {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw InvalidInput("matrix data length " + std::to_string(data_.size()) + " does not match " +
                       std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InvalidInput("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::transposed() const {
  Matrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      auto br = b.row(p);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += av * br[j];
    }
  }
  return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidInput("matmul_bt: inner dimensions differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      out(i, j) = std::inner_product(ar.begin(), ar.end(), br.begin(), 0.0);
    }
  }
  return out;
}

Matrix matmul_at(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidInput("matmul_at: inner dimensions differ");
  Matrix out(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    auto ar = a.row(p);
    auto br = b.row(p);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      auto o = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += av * br[j];
    }
  }
  return out;
}

EmbeddingMatrix::EmbeddingMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() == 0 || values_.cols() == 0) throw InvalidInput("embedding matrix must be non-empty");
  if (!values_.all_finite()) throw InvalidInput("embedding matrix contains non-finite values");
}

SimilarityMatrix::SimilarityMatrix(Matrix values, bool calibrated)
    : values_(std::move(values)), calibrated_(calibrated) {
  if (values_.rows() == 0) throw InvalidInput("similarity matrix needs at least one row");
  if (values_.cols() < 2) throw InvalidInput("similarity matrix needs at least two classes");
  if (!values_.all_finite()) throw InvalidInput("similarity matrix contains non-finite values");
}

void check_labels(std::span<const int> labels, std::size_t k) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw InvalidInput("label " + std::to_string(labels[i]) + " at position " + std::to_string(i) +
                         " outside [0, " + std::to_string(k) + ")");
    }
  }
}

std::string grade_name(int index) {
  static constexpr std::array<const char*, 5> kNames = {"normal", "mild", "moderate", "severe",
                                                        "proliferative"};
  if (index >= 0 && index < static_cast<int>(kNames.size())) return kNames[index];
  return "class" + std::to_string(index);
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double norm = std::sqrt(std::inner_product(row.begin(), row.end(), row.begin(), 0.0));
    if (norm == 0.0) continue;
    for (double& v : row) v /= norm;
  }
  return out;
}

SimilarityMatrix similarity_matrix(const EmbeddingMatrix& images, const EmbeddingMatrix& texts,
                                   bool unit_normalize) {
  if (images.dim() != texts.dim()) {
    throw InvalidInput("embedding dimensions differ: images " + std::to_string(images.dim()) +
                       ", texts " + std::to_string(texts.dim()));
  }
  if (!unit_normalize) return SimilarityMatrix(matmul_bt(images.values(), texts.values()));
  return SimilarityMatrix(matmul_bt(normalize_rows(images.values()), normalize_rows(texts.values())));
}

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("temperature must be positive");
}

}  // namespace

std::vector<double> log_softmax(std::span<const double> row, double tau) {
  check_tau(tau);
  std::vector<double> out(row.size());
  if (row.empty()) return out;
  const double peak = *std::max_element(row.begin(), row.end()) / tau;
  double total = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = row[i] / tau - peak;
    total += std::exp(out[i]);
  }
  const double log_total = std::log(total);
  for (double& v : out) v -= log_total;
  return out;
}

std::vector<double> softmax(std::span<const double> row, double tau) {
  check_tau(tau);
  std::vector<double> out(row.size());
  if (row.empty()) return out;
  const double peak = *std::max_element(row.begin(), row.end()) / tau;
  double total = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = std::exp(row[i] / tau - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Matrix softmax_rows(const Matrix& s, double tau) {
  check_tau(tau);
  Matrix out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const auto p = softmax(s.row(i), tau);
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

Matrix softmax_rows(const SimilarityMatrix& s, double tau) { return softmax_rows(s.values(), tau); }

double kl_divergence_row(std::span<const double> p, std::span<const double> q) {
  constexpr double kTolerance = 1e-9;
  if (p.size() != q.size()) throw InvalidInput("kl_divergence_row: length mismatch");
  auto check = [&](std::span<const double> v, const char* name) {
    double total = 0.0;
    for (double x : v) {
      if (!(x >= 0.0)) throw InvalidInput(std::string("kl_divergence_row: negative entry in ") + name);
      total += x;
    }
    if (std::abs(total - 1.0) > kTolerance) {
      throw InvalidInput(std::string("kl_divergence_row: ") + name + " does not sum to 1");
    }
  };
  check(p, "p");
  check(q, "q");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    kl += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kKlFloor)));
  }
  // Rounding can leave tiny negative values when p == q.
  return std::max(kl, 0.0);
}

Matrix one_hot(std::span<const int> labels, std::size_t k) {
  check_labels(labels, k);
  Matrix y(labels.size(), k);
  for (std::size_t i = 0; i < labels.size(); ++i) y(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return y;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

}  // namespace rankprompt
