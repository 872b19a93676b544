#ifndef TSRNDE_INGEST_HPP
#define TSRNDE_INGEST_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "textio.hpp"

namespace tsrnde {

struct Rect {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t width = 0;
  std::size_t height = 0;

  std::size_t area() const { return width * height; }
  bool contains(std::size_t row, std::size_t col) const {
    return col >= x0 && col < x0 + width && row >= y0 && row < y0 + height;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// A time-ordered stack of frames, stored frame-major: (frame, row, col).
class FrameSequence {
 public:
  FrameSequence() = default;

  FrameSequence(std::size_t width, std::size_t height, std::vector<double> timestamps, std::vector<double> data,
                double saturation_value = std::numeric_limits<double>::infinity(), std::string units = "counts")
      : width_(width),
        height_(height),
        timestamps_(std::move(timestamps)),
        data_(std::move(data)),
        saturation_(saturation_value),
        units_(std::move(units)) {
    if (width_ == 0 || height_ == 0 || timestamps_.empty())
      fail(Errc::invalid_argument, "frame sequence needs width, height and frame count >= 1");
    if (data_.size() != width_ * height_ * timestamps_.size())
      fail(Errc::dimension_mismatch, "data length " + std::to_string(data_.size()) + " != width*height*frames");
    for (std::size_t k = 0; k < timestamps_.size(); ++k) {
      if (!(timestamps_[k] > 0.0) || !std::isfinite(timestamps_[k]))
        fail(Errc::non_increasing_timestamps, "timestamps must be finite and > 0");
      if (k > 0 && !(timestamps_[k] > timestamps_[k - 1]))
        fail(Errc::non_increasing_timestamps, "timestamp " + std::to_string(k) + " does not increase");
    }
  }

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t frame_count() const { return timestamps_.size(); }
  std::size_t pixel_count() const { return width_ * height_; }
  double saturation_value() const { return saturation_; }
  const std::string& units() const { return units_; }
  std::span<const double> timestamps() const { return timestamps_; }
  std::span<const double> data() const { return data_; }

  std::span<const double> frame(std::size_t k) const {
    return std::span<const double>(data_).subspan(k * pixel_count(), pixel_count());
  }
  double at(std::size_t k, std::size_t row, std::size_t col) const {
    return data_[k * pixel_count() + row * width_ + col];
  }

  /// Time history of one pixel (strided gather).
  std::vector<double> pixel_series(std::size_t row, std::size_t col) const {
    std::vector<double> out(frame_count());
    const std::size_t offset = row * width_ + col;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = data_[k * pixel_count() + offset];
    return out;
  }

  friend bool operator==(const FrameSequence&, const FrameSequence&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> timestamps_;
  std::vector<double> data_;
  double saturation_ = std::numeric_limits<double>::infinity();
  std::string units_ = "counts";
};

/// Per-pixel class ids with a validity flag. Labels stay defined for invalid
/// pixels; only `valid` changes under trimming.
struct LabelMask {
  static constexpr std::uint8_t unlabeled = 255;

  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t class_count = 0;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> valid;

  LabelMask() = default;
  LabelMask(std::size_t w, std::size_t h, std::size_t k, std::uint8_t fill = 0)
      : width(w), height(h), class_count(k), labels(w * h, fill), valid(w * h, 1) {}

  std::size_t size() const { return width * height; }
  std::size_t index(std::size_t row, std::size_t col) const { return row * width + col; }
  std::size_t valid_count() const { return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1)); }

  void check() const {
    if (labels.size() != size() || valid.size() != size())
      fail(Errc::dimension_mismatch, "label mask storage does not match its dimensions");
    for (std::size_t i = 0; i < size(); ++i)
      if (valid[i] && labels[i] >= class_count)
        fail(Errc::invalid_argument, "valid pixel with label " + std::to_string(labels[i]) + " >= class count");
  }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

struct SequenceManifest {
  std::vector<std::filesystem::path> frames;  // resolved against the manifest directory
  std::vector<double> timestamps;
  std::size_t width = 0;
  std::size_t height = 0;
  double saturation_value = std::numeric_limits<double>::infinity();
  std::string units = "counts";
};

// ---------------------------------------------------------------------------
// Manifest and CSV frames

/// Manifest keys: width, height, saturation_value, units, optional fps, and
/// one `frame = <path> [timestamp]` line per frame in order. Without explicit
/// timestamps, frame k is stamped (k+1)/fps so that t > 0.
inline SequenceManifest read_manifest(const std::filesystem::path& manifest_path) {
  const auto kv = text::KeyValueFile::load(manifest_path);
  SequenceManifest m;
  m.width = static_cast<std::size_t>(kv.get_int_or("width", 0));
  m.height = static_cast<std::size_t>(kv.get_int_or("height", 0));
  if (kv.has("saturation_value")) {
    const auto& s = kv.get("saturation_value");
    m.saturation_value = (s == "inf" || s == "none") ? std::numeric_limits<double>::infinity()
                                                     : text::parse_double(s, "saturation_value");
  }
  m.units = kv.get_or("units", "counts");
  const auto base = manifest_path.parent_path();
  std::size_t stamped = 0;
  for (const auto& entry : kv.get_all("frame")) {
    const auto parts = text::words(entry);
    if (parts.empty() || parts.size() > 2) fail(Errc::parse_error, "bad frame entry '" + entry + "'");
    m.frames.push_back(base / std::string(parts[0]));
    if (parts.size() == 2) {
      m.timestamps.push_back(text::parse_double(parts[1], "frame timestamp"));
      ++stamped;
    }
  }
  if (m.frames.empty()) fail(Errc::parse_error, "manifest lists no frames");
  if (stamped == 0) {
    if (!kv.has("fps")) fail(Errc::parse_error, "manifest has neither timestamps nor fps");
    const double fps = kv.get_double("fps");
    if (!(fps > 0.0)) fail(Errc::parse_error, "fps must be > 0");
    for (std::size_t k = 0; k < m.frames.size(); ++k) m.timestamps.push_back(static_cast<double>(k + 1) / fps);
  } else if (stamped != m.frames.size()) {
    fail(Errc::parse_error, "frame count != timestamp count");
  }
  return m;
}

/// Parses one CSV frame: rows = image rows, comma-separated columns.
inline std::vector<double> parse_frame_csv(std::string_view content, std::size_t& width, std::size_t& height,
                                           std::string_view source) {
  std::vector<double> values;
  width = 0;
  height = 0;
  for (auto line : text::lines(content)) {
    if (text::trim(line).empty()) continue;
    const auto row = text::parse_doubles(line, ',', source);
    if (height == 0) {
      width = row.size();
    } else if (row.size() != width) {
      fail(Errc::dimension_mismatch, std::string(source) + ": ragged row " + std::to_string(height));
    }
    values.insert(values.end(), row.begin(), row.end());
    ++height;
  }
  if (height == 0) fail(Errc::parse_error, std::string(source) + ": empty frame");
  return values;
}

inline FrameSequence load_sequence(const std::filesystem::path& manifest_path) {
  const auto m = read_manifest(manifest_path);
  std::vector<double> data;
  std::size_t width = m.width;
  std::size_t height = m.height;
  for (std::size_t k = 0; k < m.frames.size(); ++k) {
    if (!std::filesystem::exists(m.frames[k])) fail(Errc::missing_file, "frame file " + m.frames[k].string());
    std::size_t w = 0;
    std::size_t h = 0;
    auto values = parse_frame_csv(text::read_file(m.frames[k]), w, h, m.frames[k].string());
    if (k == 0 && width == 0 && height == 0) {
      width = w;
      height = h;
    }
    if (w != width || h != height)
      fail(Errc::dimension_mismatch, m.frames[k].string() + " is " + std::to_string(w) + "x" + std::to_string(h) +
                                         ", expected " + std::to_string(width) + "x" + std::to_string(height));
    if (data.empty()) data.reserve(width * height * m.frames.size());
    data.insert(data.end(), values.begin(), values.end());
  }
  return FrameSequence(width, height, m.timestamps, std::move(data), m.saturation_value, m.units);
}

/// Writes `<dir>/<stem>.manifest` plus one CSV per frame; returns the manifest path.
inline std::filesystem::path write_sequence(const FrameSequence& seq, const std::filesystem::path& dir,
                                            const std::string& stem = "sequence") {
  std::filesystem::create_directories(dir);
  text::KeyValueFile kv;
  kv.add("width", std::to_string(seq.width()));
  kv.add("height", std::to_string(seq.height()));
  kv.add("saturation_value",
         std::isinf(seq.saturation_value()) ? std::string("inf") : text::fmt_double(seq.saturation_value()));
  kv.add("units", seq.units());
  std::string content;
  for (std::size_t k = 0; k < seq.frame_count(); ++k) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%06zu.csv", stem.c_str(), k);
    content.clear();
    const auto frame = seq.frame(k);
    for (std::size_t r = 0; r < seq.height(); ++r) {
      for (std::size_t c = 0; c < seq.width(); ++c) {
        if (c) content += ',';
        content += text::fmt_double(frame[r * seq.width() + c]);
      }
      content += '\n';
    }
    text::write_file(dir / name, content);
    kv.add("frame", std::string(name) + " " + text::fmt_double(seq.timestamps()[k]));
  }
  const auto manifest = dir / (stem + ".manifest");
  text::write_file(manifest, "# tsrnde frame sequence\n" + kv.str());
  return manifest;
}

// ---------------------------------------------------------------------------
// Geometry

inline FrameSequence crop(const FrameSequence& seq, const Rect& rect) {
  if (rect.width == 0 || rect.height == 0 || rect.x0 + rect.width > seq.width() ||
      rect.y0 + rect.height > seq.height())
    fail(Errc::out_of_bounds, "crop rect (" + std::to_string(rect.x0) + "," + std::to_string(rect.y0) + "," +
                                  std::to_string(rect.width) + "," + std::to_string(rect.height) + ") outside " +
                                  std::to_string(seq.width()) + "x" + std::to_string(seq.height()));
  std::vector<double> data;
  data.reserve(rect.area() * seq.frame_count());
  for (std::size_t k = 0; k < seq.frame_count(); ++k) {
    const auto frame = seq.frame(k);
    for (std::size_t r = rect.y0; r < rect.y0 + rect.height; ++r) {
      const auto row = frame.subspan(r * seq.width() + rect.x0, rect.width);
      data.insert(data.end(), row.begin(), row.end());
    }
  }
  return FrameSequence(rect.width, rect.height, std::vector<double>(seq.timestamps().begin(), seq.timestamps().end()),
                       std::move(data), seq.saturation_value(), seq.units());
}

namespace detail {

// Sliding window extremum of radius r along a line; out-of-range positions
// contribute `outside`.
template <typename Cmp>
void window_extremum(std::span<const int> in, std::span<int> out, std::size_t r, int outside, Cmp better) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());
  const std::ptrdiff_t rad = static_cast<std::ptrdiff_t>(r);
  // Monotone deque over indices.
  std::vector<std::ptrdiff_t> dq(in.size());
  std::size_t head = 0;
  std::size_t tail = 0;
  std::ptrdiff_t next = 0;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t hi = std::min(n - 1, i + rad);
    while (next <= hi) {
      while (tail > head && !better(in[dq[tail - 1]], in[next])) --tail;
      dq[tail++] = next++;
    }
    while (dq[head] < i - rad) ++head;
    int v = in[dq[head]];
    if (i - rad < 0 || i + rad >= n) v = better(v, outside) ? v : outside;
    out[i] = v;
  }
}

}  // namespace detail

/// Invalidates every pixel whose square (Chebyshev) neighborhood of radius
/// `margin` reaches past the image edge or contains a different label.
/// Implemented as separable sliding min/max filters over the label image.
inline LabelMask trim_mask(const LabelMask& mask, std::size_t margin) {
  LabelMask out = mask;
  if (margin == 0) return out;
  const std::size_t w = mask.width;
  const std::size_t h = mask.height;
  std::vector<int> lo(mask.size());
  std::vector<int> hi(mask.size());
  std::vector<int> line_in;
  std::vector<int> line_out;
  constexpr int below = -1;
  constexpr int above = 1 << 20;
  auto less = [](int a, int b) { return a < b; };
  auto greater = [](int a, int b) { return a > b; };
  // Rows.
  line_in.resize(w);
  line_out.resize(w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) line_in[c] = mask.labels[r * w + c];
    detail::window_extremum(line_in, line_out, margin, below, less);
    std::copy(line_out.begin(), line_out.end(), lo.begin() + static_cast<std::ptrdiff_t>(r * w));
    detail::window_extremum(line_in, line_out, margin, above, greater);
    std::copy(line_out.begin(), line_out.end(), hi.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  // Columns.
  line_in.resize(h);
  line_out.resize(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) line_in[r] = lo[r * w + c];
    detail::window_extremum(line_in, line_out, margin, below, less);
    for (std::size_t r = 0; r < h; ++r) lo[r * w + c] = line_out[r];
    for (std::size_t r = 0; r < h; ++r) line_in[r] = hi[r * w + c];
    detail::window_extremum(line_in, line_out, margin, above, greater);
    for (std::size_t r = 0; r < h; ++r) hi[r * w + c] = line_out[r];
  }
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (lo[i] != hi[i]) out.valid[i] = 0;
  return out;
}

/// Smallest frame index from which the pixel stays strictly below the
/// sequence's saturation value through the last frame.
inline std::size_t first_unsaturated_frame(std::span<const double> series, double saturation_value) {
  std::size_t first = series.size();
  while (first > 0 && series[first - 1] < saturation_value) --first;
  if (first == series.size()) fail(Errc::all_saturated, "pixel is saturated through its final frame");
  return first;
}

inline std::size_t first_unsaturated_frame(const FrameSequence& seq, std::size_t row, std::size_t col) {
  if (row >= seq.height() || col >= seq.width()) fail(Errc::out_of_bounds, "pixel outside the sequence");
  const auto series = seq.pixel_series(row, col);
  return first_unsaturated_frame(series, seq.saturation_value());
}

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval <= 255)

struct GreyImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
  friend bool operator==(const GreyImage&, const GreyImage&) = default;
};

inline std::string encode_pgm(const GreyImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline GreyImage decode_pgm(std::string_view bytes, std::string_view source = "pgm") {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string_view {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) fail(Errc::corrupt_file, std::string(source) + ": truncated PGM header");
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") fail(Errc::corrupt_file, std::string(source) + ": not a binary PGM (P5)");
  GreyImage img;
  img.width = static_cast<std::size_t>(text::parse_int(next_token(), source));
  img.height = static_cast<std::size_t>(text::parse_int(next_token(), source));
  const auto maxval = text::parse_int(next_token(), source);
  if (maxval <= 0 || maxval > 255) fail(Errc::corrupt_file, std::string(source) + ": only 8-bit PGM supported");
  ++pos;  // single whitespace before the raster
  if (bytes.size() < pos + img.width * img.height) fail(Errc::corrupt_file, std::string(source) + ": truncated raster");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + img.width * img.height));
  return img;
}

inline void write_pgm(const std::filesystem::path& path, const GreyImage& img) { text::write_file(path, encode_pgm(img)); }

inline GreyImage read_pgm(const std::filesystem::path& path) { return decode_pgm(text::read_file(path), path.string()); }

/// Mask PGM: pixel value = class id, 255 = invalid. When `class_count` is 0
/// it is inferred as the largest valid label + 1.
inline LabelMask mask_from_pgm(const GreyImage& img, std::size_t class_count = 0) {
  LabelMask mask(img.width, img.height, class_count);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    mask.labels[i] = img.pixels[i];
    mask.valid[i] = img.pixels[i] != LabelMask::unlabeled;
    if (mask.valid[i]) max_label = std::max<std::size_t>(max_label, img.pixels[i]);
  }
  if (class_count == 0) mask.class_count = max_label + 1;
  mask.check();
  return mask;
}

inline GreyImage mask_to_pgm(const LabelMask& mask) {
  GreyImage img{mask.width, mask.height, std::vector<std::uint8_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask.valid[i] ? mask.labels[i] : LabelMask::unlabeled;
  return img;
}

inline LabelMask load_mask(const std::filesystem::path& path, std::size_t class_count = 0) {
  return mask_from_pgm(read_pgm(path), class_count);
}

inline void save_mask(const std::filesystem::path& path, const LabelMask& mask) { write_pgm(path, mask_to_pgm(mask)); }

}  // namespace tsrnde

#endif
