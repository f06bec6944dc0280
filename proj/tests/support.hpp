#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "rankprompt/core.hpp"

namespace rankprompt::fixtures {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

inline LabelVector random_labels(std::size_t m, std::size_t k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, static_cast<int>(k) - 1);
  LabelVector labels(m);
  for (int& l : labels) l = dist(rng);
  return labels;
}

// |a - b| within `rel` of the larger magnitude, or within `floor` absolutely.
inline bool close_relative(double analytic, double numeric, double rel, double floor = 1e-6) {
  const double diff = std::abs(analytic - numeric);
  return diff <= std::max(floor, rel * std::max(std::abs(analytic), std::abs(numeric)));
}

// Central differences of `f` with respect to every entry of `x`.
inline Matrix numeric_gradient(Matrix x, const std::function<double(const Matrix&)>& f, double h = 1e-5) {
  Matrix grad(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.values()[i];
    x.values()[i] = saved + h;
    const double up = f(x);
    x.values()[i] = saved - h;
    const double down = f(x);
    x.values()[i] = saved;
    grad.values()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Largest violation ratio; <= 1 means every entry passes close_relative.
inline double worst_ratio(const Matrix& analytic, const Matrix& numeric, double rel, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.values()[i];
    const double n = numeric.values()[i];
    const double allowed = std::max(floor, rel * std::max(std::abs(a), std::abs(n)));
    worst = std::max(worst, std::abs(a - n) / allowed);
  }
  return worst;
}

}  // namespace rankprompt::fixtures
