#include "rankprompt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace rankprompt {

void DatasetSpec::validate() const {
  if (classes < 2) throw InvalidInput("classes must be >= 2");
  if (samples < classes) throw InvalidInput("samples must be >= classes");
  if (feature_dim < 1) throw InvalidInput("feature_dim must be >= 1");
  if (!(class_sep > 0.0) || !std::isfinite(class_sep)) throw InvalidInput("class_sep must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InvalidInput("noise_sigma must be >= 0");
  if (!(imbalance_ratio >= 1.0) || !std::isfinite(imbalance_ratio)) throw InvalidInput("imbalance_ratio must be >= 1");
}

std::string_view split_name(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  throw InvalidInput("split must be 'train' or 'test', got '" + std::string(text) + "'");
}

std::vector<std::size_t> Dataset::rows_in(Split split) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == split) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> Dataset::class_counts(std::span<const std::size_t> rows) const {
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t r : rows) ++counts[static_cast<std::size_t>(labels[r])];
  return counts;
}

Matrix Dataset::gather_features(std::span<const std::size_t> rows) const {
  Matrix out(rows.size(), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = features.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

LabelVector Dataset::gather_labels(std::span<const std::size_t> rows) const {
  LabelVector out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels[rows[i]];
  return out;
}

std::vector<std::size_t> class_counts(const DatasetSpec& spec) {
  spec.validate();
  const std::size_t k = spec.classes;
  constexpr std::size_t kMinPerClass = 2;
  if (spec.samples < kMinPerClass * k) {
    throw InvalidInput("samples=" + std::to_string(spec.samples) + " cannot give every one of " + std::to_string(k) +
                       " classes at least 2 samples");
  }

  std::vector<double> weight(k);
  for (std::size_t c = 0; c < k; ++c) {
    weight[c] = std::pow(spec.imbalance_ratio, -static_cast<double>(c) / static_cast<double>(k - 1));
  }
  const double total_weight = std::accumulate(weight.begin(), weight.end(), 0.0);

  // Largest-remainder rounding; ties go to the lower class index.
  std::vector<std::size_t> counts(k);
  std::vector<double> remainder(k);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double quota = static_cast<double>(spec.samples) * weight[c] / total_weight;
    counts[c] = static_cast<std::size_t>(std::floor(quota));
    remainder[c] = quota - std::floor(quota);
    assigned += counts[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t n = 0; assigned < spec.samples; ++n, ++assigned) ++counts[order[n % k]];

  for (std::size_t c = 0; c < k; ++c) {
    while (counts[c] < kMinPerClass) {
      const auto donor = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      --counts[donor];
      ++counts[c];
    }
  }
  return counts;
}

Dataset generate_synthetic(const DatasetSpec& spec) {
  const auto counts = class_counts(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset ds;
  ds.classes = spec.classes;
  ds.features = Matrix(spec.samples, spec.feature_dim);
  ds.labels.reserve(spec.samples);
  ds.ids.reserve(spec.samples);
  ds.splits.assign(spec.samples, Split::kTrain);

  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const std::size_t first = row;
    for (std::size_t n = 0; n < counts[c]; ++n, ++row) {
      auto f = ds.features.row(row);
      for (double& v : f) v = spec.noise_sigma * noise(rng);
      f[0] += static_cast<double>(c) * spec.class_sep;
      ds.labels.push_back(static_cast<int>(c));
      ds.ids.push_back(static_cast<std::int64_t>(row));
    }
    // Stratified 80/20: floor(20%) of each class goes to test, so train never loses a class.
    std::vector<std::size_t> members(counts[c]);
    std::iota(members.begin(), members.end(), first);
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n_test = counts[c] / 5;
    for (std::size_t n = 0; n < n_test; ++n) ds.splits[members[n]] = Split::kTest;
  }
  return ds;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  return res.ec == std::errc{} && res.ptr == end;
}

}  // namespace

std::string to_csv(const Dataset& dataset) {
  std::string out = "id,label,split";
  for (std::size_t f = 0; f < dataset.feature_dim(); ++f) out += ",f" + std::to_string(f);
  out += '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out += std::to_string(dataset.ids[i]);
    out += ',';
    out += std::to_string(dataset.labels[i]);
    out += ',';
    out += split_name(dataset.splits[i]);
    for (double v : dataset.features.row(i)) {
      out += ',';
      append_double(out, v);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
  file << to_csv(dataset);
  if (!file) throw std::runtime_error("failed writing " + path.string());
}

Dataset parse_csv(std::string_view text, std::size_t classes) {
  if (classes < 2) throw InvalidInput("parse_csv: need at least two classes");
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < text.size();) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty()) throw ParseError(1, "missing header");

  const auto header = split_fields(lines[0]);
  if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "split") {
    throw ParseError(1, "header must start with id,label,split and name at least one feature column");
  }
  const std::size_t width = header.size() - 3;
  for (std::size_t f = 0; f < width; ++f) {
    if (header[3 + f] != "f" + std::to_string(f)) {
      throw ParseError(1, "expected column f" + std::to_string(f) + ", got '" + std::string(header[3 + f]) + "'");
    }
  }

  Dataset ds;
  ds.classes = classes;
  std::vector<double> values;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const std::size_t line_no = n + 1;
    if (lines[n].empty()) {
      if (n + 1 == lines.size()) break;
      throw ParseError(line_no, "empty line");
    }
    const auto fields = split_fields(lines[n]);
    if (fields.size() != header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " columns, got " +
                                    std::to_string(fields.size()));
    }
    std::int64_t id = 0;
    if (!parse_number(fields[0], id)) throw ParseError(line_no, "id is not an integer");
    int label = 0;
    if (!parse_number(fields[1], label)) throw ParseError(line_no, "label is not an integer");
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ParseError(line_no, "label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    Split split;
    try {
      split = parse_split(fields[2]);
    } catch (const InvalidInput& e) {
      throw ParseError(line_no, e.what());
    }
    for (std::size_t f = 0; f < width; ++f) {
      double v = 0.0;
      if (!parse_number(fields[3 + f], v) || !std::isfinite(v)) {
        throw ParseError(line_no, "column f" + std::to_string(f) + " is not a finite number");
      }
      values.push_back(v);
    }
    ds.ids.push_back(id);
    ds.labels.push_back(label);
    ds.splits.push_back(split);
  }
  if (ds.labels.empty()) throw ParseError(lines.size(), "no data rows");
  ds.features = Matrix(ds.labels.size(), width, std::move(values));
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, std::size_t classes) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << file.rdbuf();
  return parse_csv(buf.str(), classes);
}

std::vector<std::vector<std::size_t>> batch_iter(const Dataset& dataset, Split split, std::size_t batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw InvalidInput("batch_size must be >= 1");
  auto rows = dataset.rows_in(split);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(rows.begin(), rows.end(), rng);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const std::size_t end = std::min(rows.size(), start + batch_size);
    batches.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(start),
                         rows.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace rankprompt
