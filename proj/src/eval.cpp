#include "rankprompt/eval.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <set>

namespace rankprompt {

namespace {

void check_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw InvalidInput(std::string(what) + ": length mismatch");
}

}  // namespace

LabelVector predict(const Matrix& scores) {
  LabelVector out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto row = scores.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> truth, std::size_t k) {
  check_same_length(predictions.size(), truth.size(), "confusion_matrix");
  check_labels(predictions, k);
  check_labels(truth, k);
  ConfusionMatrix confusion(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predictions[i])];
  }
  return confusion;
}

double macro_f1(std::span<const int> predictions, std::span<const int> truth, std::size_t k) {
  const auto confusion = confusion_matrix(predictions, truth, k);
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(confusion[c][c]);
    double predicted = 0.0;
    double actual = 0.0;
    for (std::size_t o = 0; o < k; ++o) {
      predicted += static_cast<double>(confusion[o][c]);
      actual += static_cast<double>(confusion[c][o]);
    }
    const double precision = predicted > 0.0 ? tp / predicted : 0.0;
    const double recall = actual > 0.0 ? tp / actual : 0.0;
    if (precision + recall > 0.0) total += 2.0 * precision * recall / (precision + recall);
  }
  return total / static_cast<double>(k);
}

std::optional<double> binary_auc(std::span<const double> scores, std::span<const int> labels, int positive_label) {
  check_same_length(scores.size(), labels.size(), "binary_auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // 1-based midranks over tie groups.
  std::vector<double> rank(n);
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && scores[order[end]] == scores[order[start]]) ++end;
    const double midrank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t p = start; p < end; ++p) rank[order[p]] = midrank;
    start = end;
  }

  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != positive_label) continue;
    positives += 1.0;
    rank_sum += rank[i];
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) return std::nullopt;
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

AucResult auc_macro_ovr(const Matrix& scores, std::span<const int> truth, std::size_t k) {
  check_same_length(scores.rows(), truth.size(), "auc_macro_ovr");
  if (scores.cols() != k) throw InvalidInput("auc_macro_ovr: score width must equal class count");
  check_labels(truth, k);

  AucResult result;
  result.per_class.resize(k);
  std::vector<double> column(scores.rows());
  double total = 0.0;
  std::size_t scored = 0;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < scores.rows(); ++i) column[i] = scores(i, j);
    result.per_class[j] = binary_auc(column, truth, static_cast<int>(j));
    if (result.per_class[j]) {
      total += *result.per_class[j];
      ++scored;
    }
  }
  const std::set<int> distinct(truth.begin(), truth.end());
  if (distinct.size() >= 2 && scored > 0) result.macro = total / static_cast<double>(scored);
  return result;
}

bool strictly_unimodal_at(std::span<const double> row, std::size_t peak) {
  for (std::size_t j = 1; j <= peak; ++j)
    if (!(row[j] > row[j - 1])) return false;
  for (std::size_t j = peak; j + 1 < row.size(); ++j)
    if (!(row[j] > row[j + 1])) return false;
  return true;
}

double rank_monotonicity(const SimilarityMatrix& s, std::span<const int> truth) {
  check_same_length(s.m(), truth.size(), "rank_monotonicity");
  check_labels(truth, s.k());
  std::size_t satisfied = 0;
  for (std::size_t i = 0; i < s.m(); ++i) {
    if (strictly_unimodal_at(s.row(i), static_cast<std::size_t>(truth[i]))) ++satisfied;
  }
  return static_cast<double>(satisfied) / static_cast<double>(s.m());
}

ClassMeanSimilarity class_mean_similarity(const SimilarityMatrix& s, std::span<const int> truth, std::size_t k) {
  check_same_length(s.m(), truth.size(), "class_mean_similarity");
  if (s.k() != k) throw InvalidInput("class_mean_similarity: similarity width must equal class count");
  check_labels(truth, k);
  ClassMeanSimilarity out{Matrix(k, k), std::vector<bool>(k, false)};
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < s.m(); ++i) {
    const auto c = static_cast<std::size_t>(truth[i]);
    ++counts[c];
    auto dst = out.means.row(c);
    const auto src = s.row(i);
    for (std::size_t j = 0; j < k; ++j) dst[j] += src[j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    out.present[c] = true;
    for (double& v : out.means.row(c)) v /= static_cast<double>(counts[c]);
  }
  return out;
}

std::string heatmap_csv(const ClassMeanSimilarity& heatmap) {
  const std::size_t k = heatmap.means.rows();
  std::string out = "true_class";
  for (std::size_t j = 0; j < k; ++j) out += ",s" + std::to_string(j);
  out += '\n';
  char buf[64];
  for (std::size_t c = 0; c < k; ++c) {
    out += std::to_string(c);
    for (std::size_t j = 0; j < k; ++j) {
      out += ',';
      if (!heatmap.present[c]) continue;
      const auto res = std::to_chars(buf, buf + sizeof(buf), heatmap.means(c, j), std::chars_format::general, 17);
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  auto optional_value = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& v : per_class_auc) per_class.push_back(optional_value(v));
  return {{"macro_f1", macro_f1},
          {"macro_auc", optional_value(macro_auc)},
          {"per_class_auc", std::move(per_class)},
          {"rank_monotonicity", rank_monotonicity},
          {"confusion", confusion},
          {"n_eval", n_eval}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& doc) {
  auto optional_value = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  MetricsReport report;
  report.macro_f1 = doc.at("macro_f1").get<double>();
  report.macro_auc = optional_value(doc.at("macro_auc"));
  for (const auto& v : doc.at("per_class_auc")) report.per_class_auc.push_back(optional_value(v));
  report.rank_monotonicity = doc.at("rank_monotonicity").get<double>();
  report.confusion = doc.at("confusion").get<ConfusionMatrix>();
  report.n_eval = doc.at("n_eval").get<std::size_t>();
  return report;
}

MetricsReport evaluate(const SimilarityMatrix& s, std::span<const int> truth, double tau) {
  check_same_length(s.m(), truth.size(), "evaluate");
  const Matrix scores = softmax_rows(s, tau);
  const LabelVector predictions = predict(scores);
  MetricsReport report;
  report.n_eval = s.m();
  report.confusion = confusion_matrix(predictions, truth, s.k());
  report.macro_f1 = macro_f1(predictions, truth, s.k());
  auto auc = auc_macro_ovr(scores, truth, s.k());
  report.macro_auc = auc.macro;
  report.per_class_auc = std::move(auc.per_class);
  report.rank_monotonicity = rank_monotonicity(s, truth);
  return report;
}

}  // namespace rankprompt
