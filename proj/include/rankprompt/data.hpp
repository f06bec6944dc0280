#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rankprompt/core.hpp"

namespace rankprompt {

/// Malformed dataset file; the message names the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct DatasetSpec {
  std::size_t classes = 5;
  std::size_t samples = 2000;
  std::size_t feature_dim = 16;
  /// Distance between adjacent class centres along the first feature axis.
  double class_sep = 5.0;
  double noise_sigma = 1.0;
  /// Count of class 0 divided by count of the last class.
  double imbalance_ratio = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Split { kTrain, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view text);

struct Dataset {
  std::size_t classes = 0;
  std::vector<std::int64_t> ids;
  Matrix features;
  LabelVector labels;
  std::vector<Split> splits;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return features.cols(); }

  /// Row indices belonging to `split`, in file order.
  std::vector<std::size_t> rows_in(Split split) const;
  /// Per-class sample counts over `rows`.
  std::vector<std::size_t> class_counts(std::span<const std::size_t> rows) const;

  Matrix gather_features(std::span<const std::size_t> rows) const;
  LabelVector gather_labels(std::span<const std::size_t> rows) const;
};

/// Geometric long-tail counts n_c ∝ ρ^(−c/(K−1)) summing to N, every class ≥ 2.
std::vector<std::size_t> class_counts(const DatasetSpec& spec);

/// Class c is centred at (c·δ, 0, …, 0) with isotropic Gaussian noise; 80/20 stratified split.
Dataset generate_synthetic(const DatasetSpec& spec);

/// CSV with header `id,label,split,f0,…,f{F−1}`; features printed with 17 significant digits.
std::string to_csv(const Dataset& dataset);
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

/// Parses CSV text; labels must lie in [0, classes).
Dataset parse_csv(std::string_view text, std::size_t classes);
Dataset load_csv(const std::filesystem::path& path, std::size_t classes);

/// Shuffled batches of the rows in `split`, deterministic in (seed, epoch).
std::vector<std::vector<std::size_t>> batch_iter(const Dataset& dataset, Split split, std::size_t batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch);

}  // namespace rankprompt
