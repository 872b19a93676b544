#ifndef TSRNDE_FEATURES_HPP
#define TSRNDE_FEATURES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "ingest.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "textio.hpp"
#include "tsr.hpp"

namespace tsrnde {

struct PixelCoord {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Labeled feature rows, stored row-major.
struct Dataset {
  std::size_t feature_count = 0;
  std::size_t class_count = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> labels;
  std::vector<PixelCoord> provenance;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * feature_count, feature_count);
  }
  std::span<double> row(std::size_t i) { return std::span<double>(values).subspan(i * feature_count, feature_count); }

  void push_back(std::span<const double> x, std::uint8_t label, PixelCoord where) {
    values.insert(values.end(), x.begin(), x.end());
    labels.push_back(label);
    provenance.push_back(where);
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out{feature_count, class_count, {}, {}, {}};
    out.values.reserve(indices.size() * feature_count);
    out.labels.reserve(indices.size());
    out.provenance.reserve(indices.size());
    for (auto i : indices) out.push_back(row(i), labels[i], provenance[i]);
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// One row per pixel that is valid in the mask and was fitted successfully.
/// Every class that labels some mask pixel must keep at least one row.
inline Dataset assemble(const FeatureImage& features, const LabelMask& mask) {
  if (features.width != mask.width || features.height != mask.height)
    fail(Errc::dimension_mismatch, "feature image and mask differ in size");
  mask.check();
  Dataset ds{features.feature_count, mask.class_count, {}, {}, {}};
  std::vector<std::size_t> per_class(std::max<std::size_t>(mask.class_count, 1), 0);
  std::vector<std::uint8_t> present(256, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    present[mask.labels[i]] = 1;
    if (!mask.valid[i] || !features.valid[i]) continue;
    ds.push_back(features.features(i), mask.labels[i],
                 PixelCoord{static_cast<std::uint32_t>(i / mask.width), static_cast<std::uint32_t>(i % mask.width)});
    ++per_class[mask.labels[i]];
  }
  for (std::size_t c = 0; c < mask.class_count; ++c)
    if (present[c] && per_class[c] == 0) fail(Errc::empty_class, "class " + std::to_string(c) + " has no usable pixels");
  if (ds.empty()) fail(Errc::empty_class, "no valid pixels in the mask");
  return ds;
}

/// Per-feature mean and population standard deviation.
struct ScalingStats {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t size() const { return mean.size(); }
  bool is_constant(std::size_t f) const { return std[f] == 0.0; }
  friend bool operator==(const ScalingStats&, const ScalingStats&) = default;
};

inline ScalingStats fit_scaler(const Dataset& train) {
  if (train.size() < 2) fail(Errc::invalid_argument, "scaler needs at least 2 rows");
  const std::size_t f_count = train.feature_count;
  ScalingStats s{std::vector<double>(f_count, 0.0), std::vector<double>(f_count, 0.0)};
  const double n = static_cast<double>(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto x = train.row(i);
    for (std::size_t f = 0; f < f_count; ++f) s.mean[f] += x[f];
  }
  for (auto& m : s.mean) m /= n;
  // Two-pass variance; exact zero for constant columns.
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto x = train.row(i);
    for (std::size_t f = 0; f < f_count; ++f) {
      const double d = x[f] - s.mean[f];
      s.std[f] += d * d;
    }
  }
  for (std::size_t f = 0; f < f_count; ++f) {
    bool constant = true;
    const double first = train.row(0)[f];
    for (std::size_t i = 1; i < train.size() && constant; ++i) constant = train.row(i)[f] == first;
    s.std[f] = constant ? 0.0 : std::sqrt(s.std[f] / n);
    if (constant) s.mean[f] = first;
  }
  return s;
}

inline void scale_in_place(std::span<double> x, const ScalingStats& s) {
  for (std::size_t f = 0; f < x.size(); ++f) x[f] = s.std[f] == 0.0 ? 0.0 : (x[f] - s.mean[f]) / s.std[f];
}

inline Dataset apply_scaler(const Dataset& ds, const ScalingStats& s) {
  if (s.size() != ds.feature_count) fail(Errc::dimension_mismatch, "scaling stats do not match the feature count");
  Dataset out = ds;
  for (std::size_t i = 0; i < out.size(); ++i) scale_in_place(out.row(i), s);
  return out;
}

inline FeatureImage apply_scaler(const FeatureImage& img, const ScalingStats& s) {
  if (s.size() != img.feature_count) fail(Errc::dimension_mismatch, "scaling stats do not match the feature count");
  FeatureImage out = img;
  for (std::size_t p = 0; p < out.pixel_count(); ++p)
    if (out.valid[p]) scale_in_place(out.features(p), s);
  out.scaling_pending = false;
  return out;
}

namespace detail {

inline void jitter_row(std::span<double> x, double amplitude, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& v : x) v *= 1.0 + uniform(rng, -amplitude, amplitude);
}

}  // namespace detail

/// Keeps the originals and appends `copies` jittered replicas. Each element
/// of a replica is x * (1 + u) with u ~ U[-amplitude, amplitude]; every
/// (copy, row) pair has its own stream.
inline Dataset augment(const Dataset& train, double relative_amplitude, std::size_t copies, std::uint64_t seed) {
  if (!(relative_amplitude >= 0.0)) fail(Errc::invalid_argument, "augmentation amplitude must be >= 0");
  Dataset out{train.feature_count, train.class_count, {}, {}, {}};
  const std::size_t n = train.size();
  out.values.reserve(n * (copies + 1) * train.feature_count);
  out.labels.reserve(n * (copies + 1));
  out.provenance.reserve(n * (copies + 1));
  for (std::size_t c = 0; c <= copies; ++c)
    for (std::size_t i = 0; i < n; ++i) out.push_back(train.row(i), train.labels[i], train.provenance[i]);
  if (relative_amplitude > 0.0) {
    parallel_for(n * copies, [&](std::size_t j) {
      const std::size_t c = j / n + 1;
      const std::size_t i = j % n;
      detail::jitter_row(out.row(c * n + i), relative_amplitude, derive_seed(seed, {0xa06u, c, i}));
    }, 4096);
  }
  return out;
}

/// Same jitter as `augment`, replacing the rows instead of adding copies.
inline Dataset perturb(const Dataset& ds, double relative_amplitude, std::uint64_t seed) {
  if (!(relative_amplitude >= 0.0)) fail(Errc::invalid_argument, "perturbation amplitude must be >= 0");
  Dataset out = ds;
  if (relative_amplitude == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i)
    detail::jitter_row(out.row(i), relative_amplitude, derive_seed(seed, {0x9e7u, i}));
  return out;
}

/// Per-pixel jitter of an unscaled feature image (outsample replay).
inline FeatureImage perturb(const FeatureImage& img, double relative_amplitude, std::uint64_t seed) {
  if (!(relative_amplitude >= 0.0)) fail(Errc::invalid_argument, "perturbation amplitude must be >= 0");
  FeatureImage out = img;
  if (relative_amplitude == 0.0) return out;
  for (std::size_t p = 0; p < out.pixel_count(); ++p)
    if (out.valid[p]) detail::jitter_row(out.features(p), relative_amplitude, derive_seed(seed, {0x9e7u, p}));
  return out;
}

struct SplitSpec {
  double train_fraction = 0.8;
  double validation_fraction_of_train = 0.1;
  std::uint64_t seed = 0;
};

struct SplitResult {
  Dataset train;
  Dataset validation;
  Dataset test;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// |test| = round((1 - train_fraction) N), |validation| = round(v (N - |test|)).
inline SplitSizes split_sizes(std::size_t n, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) ||
      !(spec.validation_fraction_of_train > 0.0 && spec.validation_fraction_of_train < 1.0))
    fail(Errc::invalid_argument, "split fractions must lie in (0, 1)");
  SplitSizes s;
  s.test = static_cast<std::size_t>(std::llround((1.0 - spec.train_fraction) * static_cast<double>(n)));
  const std::size_t train_raw = n - std::min(n, s.test);
  s.validation = static_cast<std::size_t>(std::llround(spec.validation_fraction_of_train * static_cast<double>(train_raw)));
  s.train = train_raw - std::min(train_raw, s.validation);
  if (s.test == 0 || s.validation == 0 || s.train == 0 || s.test + s.validation + s.train != n)
    fail(Errc::invalid_argument, std::to_string(n) + " rows are too few for a non-empty three-way split");
  return s;
}

/// Uniform random partition (not stratified). Rows keep their original
/// relative order inside each part.
inline SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  const auto sizes = split_sizes(ds.size(), spec);
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(spec.seed, {0x5b117u}));
  shuffle(order.begin(), order.end(), rng);
  auto part = [&](std::size_t lo, std::size_t count) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                 order.begin() + static_cast<std::ptrdiff_t>(lo + count));
    std::sort(idx.begin(), idx.end());
    return ds.subset(idx);
  };
  SplitResult out;
  out.test = part(0, sizes.test);
  out.validation = part(sizes.test, sizes.validation);
  out.train = part(sizes.test + sizes.validation, sizes.train);
  return out;
}

// ---------------------------------------------------------------------------
// Files

inline std::string encode_dataset(const Dataset& ds) {
  std::string out;
  for (std::size_t f = 0; f < ds.feature_count; ++f) out += "f" + std::to_string(f) + ",";
  out += "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) out += text::fmt_double(v) + ",";
    out += std::to_string(ds.labels[i]) + "\n";
  }
  return out;
}

inline std::string encode_provenance(const Dataset& ds) {
  std::string out = "row,col\n";
  for (const auto& p : ds.provenance) out += std::to_string(p.row) + "," + std::to_string(p.col) + "\n";
  return out;
}

/// Writes `<path>` (features + label) and `<path>.provenance`.
inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  text::write_file(path, encode_dataset(ds));
  text::write_file(path.string() + ".provenance", encode_provenance(ds));
}

inline Dataset load_dataset(const std::filesystem::path& path, std::size_t class_count = 0) {
  const auto content = text::read_file(path);
  const auto rows = text::lines(content);
  if (rows.empty()) fail(Errc::corrupt_file, path.string() + ": empty dataset");
  const auto header = text::split(rows[0], ',');
  if (header.empty() || text::trim(header.back()) != "label") fail(Errc::corrupt_file, path.string() + ": bad header");
  Dataset ds{header.size() - 1, class_count, {}, {}, {}};
  std::size_t max_label = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (text::trim(rows[i]).empty()) continue;
    const auto fields = text::split(rows[i], ',');
    if (fields.size() != header.size()) fail(Errc::corrupt_file, path.string() + ": ragged row " + std::to_string(i));
    for (std::size_t f = 0; f < ds.feature_count; ++f) ds.values.push_back(text::parse_double(fields[f], path.string()));
    const auto label = text::parse_int(fields.back(), path.string());
    if (label < 0 || label > 254) fail(Errc::corrupt_file, path.string() + ": label out of range");
    ds.labels.push_back(static_cast<std::uint8_t>(label));
    max_label = std::max<std::size_t>(max_label, static_cast<std::size_t>(label));
  }
  if (ds.class_count == 0) ds.class_count = max_label + 1;
  const auto prov_path = std::filesystem::path(path.string() + ".provenance");
  if (std::filesystem::exists(prov_path)) {
    const auto prov = text::read_file(prov_path);
    const auto prow = text::lines(prov);
    for (std::size_t i = 1; i < prow.size(); ++i) {
      if (text::trim(prow[i]).empty()) continue;
      const auto f = text::split(prow[i], ',');
      if (f.size() != 2) fail(Errc::corrupt_file, prov_path.string() + ": bad row");
      ds.provenance.push_back({static_cast<std::uint32_t>(text::parse_int(f[0])), static_cast<std::uint32_t>(text::parse_int(f[1]))});
    }
    if (ds.provenance.size() != ds.size()) fail(Errc::corrupt_file, prov_path.string() + ": row count mismatch");
  } else {
    ds.provenance.assign(ds.size(), PixelCoord{});
  }
  return ds;
}

/// Two rows: `mean,...` and `std,...`.
inline std::string encode_stats(const ScalingStats& s) {
  std::string out = "mean";
  for (double v : s.mean) out += "," + text::fmt_double(v);
  out += "\nstd";
  for (double v : s.std) out += "," + text::fmt_double(v);
  return out + "\n";
}

inline ScalingStats decode_stats(std::string_view content, std::string_view source = "stats") {
  ScalingStats s;
  for (auto line : text::lines(content)) {
    if (text::trim(line).empty()) continue;
    const auto comma = line.find(',');
    const auto tag = text::trim(line.substr(0, comma));
    const auto rest = comma == std::string_view::npos ? std::string_view{} : line.substr(comma + 1);
    auto values = rest.empty() ? std::vector<double>{} : text::parse_doubles(rest, ',', source);
    if (tag == "mean") s.mean = std::move(values);
    else if (tag == "std") s.std = std::move(values);
    else fail(Errc::corrupt_file, std::string(source) + ": unexpected row '" + std::string(tag) + "'");
  }
  if (s.mean.size() != s.std.size()) fail(Errc::corrupt_file, std::string(source) + ": mean/std length mismatch");
  for (double v : s.std)
    if (!(v >= 0.0)) fail(Errc::corrupt_file, std::string(source) + ": negative std");
  return s;
}

}  // namespace tsrnde

#endif
