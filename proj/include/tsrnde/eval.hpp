#ifndef TSRNDE_EVAL_HPP
#define TSRNDE_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "ingest.hpp"
#include "textio.hpp"

namespace tsrnde {

/// Rows are actual classes, columns predicted.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;
  std::vector<std::string> names;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t k, std::vector<std::string> class_names = {})
      : classes(k), counts(k * k, 0), names(std::move(class_names)) {
    if (names.empty())
      for (std::size_t i = 0; i < k; ++i) names.push_back("class" + std::to_string(i));
    if (names.size() != k) fail(Errc::invalid_argument, "class name count does not match K");
  }

  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows,
                                   std::vector<std::string> class_names = {}) {
    ConfusionMatrix cm(rows.size(), std::move(class_names));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) fail(Errc::dimension_mismatch, "confusion matrix must be square");
      for (std::size_t j = 0; j < rows.size(); ++j) cm.at(i, j) = rows[i][j];
    }
    return cm;
  }

  std::uint64_t& at(std::size_t actual, std::size_t predicted) { return counts[actual * classes + predicted]; }
  std::uint64_t at(std::size_t actual, std::size_t predicted) const { return counts[actual * classes + predicted]; }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  std::uint64_t trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < classes; ++i) t += at(i, i);
    return t;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const std::uint8_t> actual, std::span<const std::uint8_t> predicted,
                                 std::size_t k) {
  if (actual.size() != predicted.size()) fail(Errc::dimension_mismatch, "actual and predicted differ in length");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] >= k || predicted[i] >= k) fail(Errc::out_of_bounds, "label outside [0, K)");
    ++cm.at(actual[i], predicted[i]);
  }
  return cm;
}

/// Confusion over pixels valid in both the truth mask and the prediction.
inline ConfusionMatrix confusion(const LabelMask& truth, const LabelMask& predicted, std::size_t k) {
  if (truth.width != predicted.width || truth.height != predicted.height)
    fail(Errc::dimension_mismatch, "truth and prediction differ in size");
  std::vector<std::uint8_t> a;
  std::vector<std::uint8_t> p;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!truth.valid[i] || !predicted.valid[i]) continue;
    a.push_back(truth.labels[i]);
    p.push_back(predicted.labels[i]);
  }
  return confusion(a, p, k);
}

/// `precision` and `recall` are empty when their denominator is zero.
struct Metrics {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
};

/// Accuracy over the whole matrix; precision and recall treat the classes in
/// `positive` as one aggregate positive class.
inline Metrics metrics(const ConfusionMatrix& cm, std::span<const std::size_t> positive) {
  const auto total = cm.total();
  if (total == 0) fail(Errc::invalid_argument, "metrics of an empty confusion matrix");
  std::vector<bool> pos(cm.classes, false);
  for (auto c : positive) {
    if (c >= cm.classes) fail(Errc::out_of_bounds, "positive class outside [0, K)");
    pos[c] = true;
  }
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < cm.classes; ++i)
    for (std::size_t j = 0; j < cm.classes; ++j) {
      const auto n = cm.at(i, j);
      if (pos[i] && pos[j]) tp += n;
      else if (!pos[i] && pos[j]) fp += n;
      else if (pos[i] && !pos[j]) fn += n;
    }
  Metrics m;
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return m;
}

/// Classes in `positive_set` are "unacceptable"; the rest "acceptable".
struct BinaryCollapseSpec {
  std::vector<std::size_t> positive_set;
  std::string name;

  void validate(std::size_t k) const {
    if (positive_set.empty()) fail(Errc::invalid_argument, "collapse '" + name + "' has an empty positive set");
    std::vector<bool> seen(k, false);
    for (auto c : positive_set) {
      if (c >= k) fail(Errc::invalid_argument, "collapse '" + name + "' names class " + std::to_string(c) + " >= K");
      seen[c] = true;
    }
    if (std::count(seen.begin(), seen.end(), true) == static_cast<std::ptrdiff_t>(k))
      fail(Errc::invalid_argument, "collapse '" + name + "' positive set must be a proper subset");
  }
};

/// 2x2 matrix over {acceptable = 0, unacceptable = 1}.
inline ConfusionMatrix collapse(const ConfusionMatrix& cm, const BinaryCollapseSpec& spec) {
  spec.validate(cm.classes);
  std::vector<std::size_t> side(cm.classes, 0);
  for (auto c : spec.positive_set) side[c] = 1;
  ConfusionMatrix out(2, {"acceptable", "unacceptable"});
  for (std::size_t i = 0; i < cm.classes; ++i)
    for (std::size_t j = 0; j < cm.classes; ++j) out.at(side[i], side[j]) += cm.at(i, j);
  return out;
}

inline Metrics binary_metrics(const ConfusionMatrix& two_by_two) {
  const std::size_t positive[] = {1};
  return metrics(two_by_two, positive);
}

// ---------------------------------------------------------------------------
// Segmentation images

inline constexpr std::uint8_t invalid_shade = 1;

inline std::uint8_t class_shade(std::size_t cls, std::size_t k) {
  return static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(cls) / static_cast<double>(k - 1)));
}

/// Class i -> round(255 i / (K-1)); invalid pixels -> shade 1.
inline GreyImage render_segmentation(const LabelMask& map, std::size_t k) {
  if (k < 2) fail(Errc::invalid_argument, "segmentation rendering needs K >= 2");
  GreyImage img{map.width, map.height, std::vector<std::uint8_t>(map.size())};
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!map.valid[i]) {
      img.pixels[i] = invalid_shade;
      continue;
    }
    if (map.labels[i] >= k) fail(Errc::out_of_bounds, "label outside [0, K) in segmentation map");
    img.pixels[i] = class_shade(map.labels[i], k);
  }
  return img;
}

struct RegionSummary {
  std::size_t truth_class = 0;
  std::size_t pixels = 0;
  std::size_t majority_class = 0;
  double fraction_correct = 0.0;
  std::vector<double> predicted_fractions;  // indexed by predicted class
};

struct RegionReport {
  std::vector<RegionSummary> regions;
  std::vector<std::string> warnings;
};

/// Per ground-truth class: majority prediction and fraction correct over
/// pixels valid in both maps. Classes with no such pixels are skipped with a
/// warning.
inline RegionReport region_report(const LabelMask& predicted, const LabelMask& truth) {
  if (truth.width != predicted.width || truth.height != predicted.height)
    fail(Errc::dimension_mismatch, "truth and prediction differ in size");
  const std::size_t k = std::max(truth.class_count, predicted.class_count);
  std::vector<std::vector<std::size_t>> counts(truth.class_count, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!truth.valid[i] || !predicted.valid[i]) continue;
    if (truth.labels[i] >= truth.class_count || predicted.labels[i] >= k) continue;
    ++counts[truth.labels[i]][predicted.labels[i]];
  }
  RegionReport report;
  for (std::size_t c = 0; c < truth.class_count; ++c) {
    std::size_t n = 0;
    for (auto v : counts[c]) n += v;
    if (n == 0) {
      report.warnings.push_back("class " + std::to_string(c) + " has no valid pixels; region omitted");
      continue;
    }
    RegionSummary s;
    s.truth_class = c;
    s.pixels = n;
    s.majority_class = static_cast<std::size_t>(std::max_element(counts[c].begin(), counts[c].end()) - counts[c].begin());
    s.fraction_correct = c < k ? static_cast<double>(counts[c][c]) / static_cast<double>(n) : 0.0;
    for (auto v : counts[c]) s.predicted_fractions.push_back(static_cast<double>(v) / static_cast<double>(n));
    report.regions.push_back(std::move(s));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string format_metric(const std::optional<double>& v) { return v ? text::fmt_double(*v) : "undefined"; }

inline std::string format_percent(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * *v);
  return buf;
}

/// CSV: header `actual\predicted,<names...>`, one row per actual class.
inline std::string encode_confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "actual\\predicted";
  for (const auto& n : cm.names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < cm.classes; ++i) {
    out += cm.names[i];
    for (std::size_t j = 0; j < cm.classes; ++j) out += "," + std::to_string(cm.at(i, j));
    out += "\n";
  }
  return out;
}

inline ConfusionMatrix decode_confusion_csv(std::string_view content, std::string_view source = "matrix") {
  std::vector<std::string> names;
  std::vector<std::vector<std::uint64_t>> rows;
  bool header = true;
  for (auto line : text::lines(content)) {
    if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
    const auto fields = text::split(line, ',');
    if (header) {
      header = false;
      for (std::size_t i = 1; i < fields.size(); ++i) names.emplace_back(text::trim(fields[i]));
      continue;
    }
    if (fields.size() != names.size() + 1) fail(Errc::corrupt_file, std::string(source) + ": ragged matrix row");
    std::vector<std::uint64_t> row;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const auto v = text::parse_int(fields[i], source);
      if (v < 0) fail(Errc::corrupt_file, std::string(source) + ": negative count");
      row.push_back(static_cast<std::uint64_t>(v));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.size() != names.size()) fail(Errc::corrupt_file, std::string(source) + ": matrix is not square");
  return ConfusionMatrix::from_rows(rows, names);
}

/// Right-aligned plain-text table.
inline std::string format_confusion_text(const ConfusionMatrix& cm) {
  std::size_t width = 8;
  for (const auto& n : cm.names) width = std::max(width, n.size() + 1);
  for (auto c : cm.counts) width = std::max(width, std::to_string(c).size() + 1);
  auto pad = [&](const std::string& s) { return std::string(width > s.size() ? width - s.size() : 0, ' ') + s; };
  std::string out = pad("actual");
  for (const auto& n : cm.names) out += pad(n);
  out += "\n";
  for (std::size_t i = 0; i < cm.classes; ++i) {
    out += pad(cm.names[i]);
    for (std::size_t j = 0; j < cm.classes; ++j) out += pad(std::to_string(cm.at(i, j)));
    out += "\n";
  }
  out += pad("n=") + pad(std::to_string(cm.total())) + "\n";
  return out;
}

}  // namespace tsrnde

#endif
