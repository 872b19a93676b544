#ifndef TSRNDE_TSR_HPP
#define TSRNDE_TSR_HPP

// Thermographic signal reconstruction: least-squares polynomial fits of
// log temperature against log time, their analytic log-time derivatives,
// and the packed per-pixel feature vectors built from them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "ingest.hpp"
#include "parallel.hpp"
#include "textio.hpp"

namespace tsrnde {

/// Dense polynomial, coefficients in increasing power order.
struct Polynomial {
  std::vector<double> coefficients;

  std::size_t degree() const { return coefficients.empty() ? 0 : coefficients.size() - 1; }

  double operator()(double x) const {
    double acc = 0.0;
    for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * x + *it;
    return acc;
  }

  Polynomial derivative() const {
    Polynomial d;
    for (std::size_t i = 1; i < coefficients.size(); ++i) d.coefficients.push_back(static_cast<double>(i) * coefficients[i]);
    return d;
  }

  friend bool operator==(const Polynomial&, const Polynomial&) = default;
};

/// Log-log fit of one pixel. `coefficients` are in the raw log-time basis:
/// log T ~ sum_i a_i (log t)^i.
struct TsrFit {
  std::size_t degree = 0;
  std::vector<double> coefficients;
  double domain_lo = 0.0;  // log t of the first fitted frame
  double domain_hi = 0.0;
  double rms_residual = 0.0;
  double log_base = 10.0;
  std::size_t first_frame = 0;

  Polynomial polynomial() const { return {coefficients}; }
};

enum class Packing { concat_truncated, concat_padded };

inline const char* packing_name(Packing p) {
  return p == Packing::concat_padded ? "concat-padded" : "concat-truncated";
}

inline Packing parse_packing(std::string_view s) {
  if (s == "concat-padded" || s == "padded") return Packing::concat_padded;
  if (s == "concat-truncated" || s == "truncated") return Packing::concat_truncated;
  fail(Errc::parse_error, "unknown packing '" + std::string(s) + "'");
}

/// Truncated: (d+1) + d + (d-1) = 3d. Padded: every block d+1, so 3(d+1).
inline std::size_t feature_length(std::size_t degree, Packing packing) {
  return packing == Packing::concat_padded ? 3 * (degree + 1) : 3 * degree;
}

inline double log_in_base(double v, double base) {
  if (base == 10.0) return std::log10(v);
  if (base == std::numbers::e) return std::log(v);
  return std::log(v) / std::log(base);
}

/// Least-squares polynomial fitter for a fixed abscissa set.
///
/// The abscissae are mapped affinely onto [-1, 1] and the Vandermonde matrix
/// in the mapped variable is factored once by Householder QR; each ordinate
/// vector then costs one application of Q^T and a triangular solve. The
/// solution is converted back to the raw basis.
class LogPolyFitter {
 public:
  LogPolyFitter(std::span<const double> x, std::size_t degree) : n_(x.size()), m_(degree + 1) {
    if (n_ < m_)
      fail(Errc::underdetermined,
           std::to_string(n_) + " samples cannot determine a degree-" + std::to_string(degree) + " polynomial");
    lo_ = x.front();
    hi_ = x.back();
    for (double v : x) {
      lo_ = std::min(lo_, v);
      hi_ = std::max(hi_, v);
    }
    center_ = 0.5 * (lo_ + hi_);
    half_ = 0.5 * (hi_ - lo_);
    if (!(half_ > 0.0)) half_ = 1.0;

    // Column-major Vandermonde in u = (x - center) / half.
    qr_.assign(n_ * m_, 0.0);
    for (std::size_t k = 0; k < n_; ++k) {
      const double u = (x[k] - center_) / half_;
      double p = 1.0;
      for (std::size_t j = 0; j < m_; ++j) {
        qr_[j * n_ + k] = p;
        p *= u;
      }
    }
    beta_.assign(m_, 0.0);
    diag_.assign(m_, 0.0);
    for (std::size_t j = 0; j < m_; ++j) {
      double* col = &qr_[j * n_];
      double norm = 0.0;
      for (std::size_t k = j; k < n_; ++k) norm += col[k] * col[k];
      norm = std::sqrt(norm);
      const double alpha = col[j] > 0.0 ? -norm : norm;
      // v = col[j:] - alpha e1, stored in place; beta = 2 / (v.v)
      col[j] -= alpha;
      double vv = 0.0;
      for (std::size_t k = j; k < n_; ++k) vv += col[k] * col[k];
      beta_[j] = vv > 0.0 ? 2.0 / vv : 0.0;
      diag_[j] = alpha;
      for (std::size_t c = j + 1; c < m_; ++c) {
        double* other = &qr_[c * n_];
        double dot = 0.0;
        for (std::size_t k = j; k < n_; ++k) dot += col[k] * other[k];
        const double s = beta_[j] * dot;
        for (std::size_t k = j; k < n_; ++k) other[k] -= s * col[k];
      }
    }
    double rmax = 0.0;
    for (double d : diag_) rmax = std::max(rmax, std::abs(d));
    const double tol = static_cast<double>(n_) * std::numeric_limits<double>::epsilon() * rmax;
    for (std::size_t j = 0; j < m_; ++j)
      if (!(std::abs(diag_[j]) > tol))
        fail(Errc::rank_deficient, "design matrix is rank deficient at column " + std::to_string(j));

    // Raw-basis conversion: ((x - c)/h)^j = sum_i binom(j,i) x^i (-c)^(j-i) / h^j
    to_raw_.assign(m_ * m_, 0.0);
    for (std::size_t j = 0; j < m_; ++j) {
      double binom = 1.0;
      const double scale = std::pow(half_, -static_cast<double>(j));
      for (std::size_t i = 0; i <= j; ++i) {
        if (i > 0) binom = binom * static_cast<double>(j - i + 1) / static_cast<double>(i);
        to_raw_[i * m_ + j] = binom * std::pow(-center_, static_cast<double>(j - i)) * scale;
      }
    }
  }

  std::size_t samples() const { return n_; }
  std::size_t degree() const { return m_ - 1; }
  double domain_lo() const { return lo_; }
  double domain_hi() const { return hi_; }

  /// Solves for raw-basis coefficients. `y` is overwritten with Q^T y.
  /// Returns the residual sum of squares.
  double solve_in_place(std::span<double> y, std::span<double> raw_coefficients) const {
    for (std::size_t j = 0; j < m_; ++j) {
      const double* v = &qr_[j * n_];
      double dot = 0.0;
      for (std::size_t k = j; k < n_; ++k) dot += v[k] * y[k];
      const double s = beta_[j] * dot;
      for (std::size_t k = j; k < n_; ++k) y[k] -= s * v[k];
    }
    double rss = 0.0;
    for (std::size_t k = m_; k < n_; ++k) rss += y[k] * y[k];
    // Back substitution on R (upper triangle above the diagonal lives in qr_).
    double b[32];
    std::vector<double> heap;
    double* bp = b;
    if (m_ > 32) {
      heap.resize(m_);
      bp = heap.data();
    }
    for (std::size_t j = m_; j-- > 0;) {
      double acc = y[j];
      for (std::size_t c = j + 1; c < m_; ++c) acc -= qr_[c * n_ + j] * bp[c];
      bp[j] = acc / diag_[j];
    }
    for (std::size_t i = 0; i < m_; ++i) {
      double acc = 0.0;
      for (std::size_t j = i; j < m_; ++j) acc += to_raw_[i * m_ + j] * bp[j];
      raw_coefficients[i] = acc;
    }
    return rss;
  }

 private:
  std::size_t n_;
  std::size_t m_;
  double lo_ = 0.0;
  double hi_ = 0.0;
  double center_ = 0.0;
  double half_ = 1.0;
  std::vector<double> qr_;
  std::vector<double> beta_;
  std::vector<double> diag_;
  std::vector<double> to_raw_;  // row i, column j: weight of u^j on x^i
};

namespace detail {

inline TsrFit fit_with(const LogPolyFitter& fitter, std::span<const double> series, std::size_t first_frame,
                       double log_base, std::vector<double>& scratch) {
  scratch.resize(fitter.samples());
  for (std::size_t k = 0; k < fitter.samples(); ++k) {
    const double v = series[first_frame + k];
    if (!(v > 0.0) || !std::isfinite(v))
      fail(Errc::non_positive_value, "temperature " + text::fmt_double(v) + " at frame " +
                                         std::to_string(first_frame + k) + " has no logarithm");
    scratch[k] = log_in_base(v, log_base);
  }
  TsrFit fit;
  fit.degree = fitter.degree();
  fit.coefficients.resize(fit.degree + 1);
  fit.log_base = log_base;
  fit.first_frame = first_frame;
  fit.domain_lo = fitter.domain_lo();
  fit.domain_hi = fitter.domain_hi();
  const double rss = fitter.solve_in_place(scratch, fit.coefficients);
  fit.rms_residual = std::sqrt(rss / static_cast<double>(fitter.samples()));
  return fit;
}

inline std::vector<double> log_times(std::span<const double> timestamps, std::size_t first_frame, double log_base) {
  std::vector<double> x;
  x.reserve(timestamps.size() - std::min(first_frame, timestamps.size()));
  for (std::size_t k = first_frame; k < timestamps.size(); ++k) {
    if (!(timestamps[k] > 0.0)) fail(Errc::non_increasing_timestamps, "timestamps must be > 0");
    if (k > first_frame && !(timestamps[k] > timestamps[k - 1]))
      fail(Errc::non_increasing_timestamps, "timestamps must increase");
    x.push_back(log_in_base(timestamps[k], log_base));
  }
  return x;
}

}  // namespace detail

/// Fits log T against log t over frames [first_frame, end).
inline TsrFit fit_pixel(std::span<const double> series, std::span<const double> timestamps, std::size_t degree,
                        std::size_t first_frame = 0, double log_base = 10.0) {
  if (series.size() != timestamps.size()) fail(Errc::dimension_mismatch, "series and timestamps differ in length");
  if (first_frame > series.size()) fail(Errc::out_of_bounds, "first frame beyond the series");
  const LogPolyFitter fitter(detail::log_times(timestamps, first_frame, log_base), degree);
  std::vector<double> scratch;
  return detail::fit_with(fitter, series, first_frame, log_base, scratch);
}

struct Derivatives {
  Polynomial first;
  Polynomial second;
};

inline Derivatives derivatives(const TsrFit& fit) {
  if (fit.degree < 2) fail(Errc::invalid_argument, "derivative features need degree >= 2");
  Derivatives d;
  d.first = fit.polynomial().derivative();
  d.second = d.first.derivative();
  return d;
}

inline std::vector<double> pack_features(const TsrFit& fit, Packing packing = Packing::concat_padded) {
  const auto d = derivatives(fit);
  std::vector<double> out;
  out.reserve(feature_length(fit.degree, packing));
  auto append = [&](const std::vector<double>& block) {
    out.insert(out.end(), block.begin(), block.end());
    if (packing == Packing::concat_padded) out.resize(out.size() + (fit.degree + 1 - block.size()), 0.0);
  };
  append(fit.coefficients);
  append(d.first.coefficients);
  append(d.second.coefficients);
  return out;
}

struct TsrOptions {
  std::size_t degree = 4;
  Packing packing = Packing::concat_padded;
  double log_base = 10.0;
};

/// Per-pixel feature vectors, pixel-major. Invalid pixels (failed fits)
/// carry zero features.
struct FeatureImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t degree = 0;
  Packing packing = Packing::concat_padded;
  double log_base = 10.0;
  bool scaling_pending = true;
  std::size_t feature_count = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  FeatureImage() = default;
  FeatureImage(std::size_t w, std::size_t h, std::size_t deg, Packing p, double base = 10.0)
      : width(w),
        height(h),
        degree(deg),
        packing(p),
        log_base(base),
        feature_count(feature_length(deg, p)),
        values(w * h * feature_count, 0.0),
        valid(w * h, 0) {}

  std::size_t pixel_count() const { return width * height; }
  std::size_t valid_count() const { return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1)); }
  std::span<const double> features(std::size_t pixel) const {
    return std::span<const double>(values).subspan(pixel * feature_count, feature_count);
  }
  std::span<double> features(std::size_t pixel) {
    return std::span<double>(values).subspan(pixel * feature_count, feature_count);
  }

  friend bool operator==(const FeatureImage&, const FeatureImage&) = default;
};

struct FitReport {
  std::size_t fitted = 0;
  std::size_t all_saturated = 0;
  std::size_t non_positive = 0;
  std::size_t other_errors = 0;
};

/// Fits every pixel from its own first unsaturated frame. Pixels that fail
/// are flagged invalid and counted in `report`; the batch never aborts.
/// Factorizations are shared between pixels with the same start frame.
inline FeatureImage fit_sequence(const FrameSequence& seq, const TsrOptions& options = {},
                                 FitReport* report = nullptr) {
  if (options.degree < 2) fail(Errc::invalid_argument, "feature extraction needs degree >= 2");
  const std::size_t w = seq.width();
  const std::size_t h = seq.height();
  const std::size_t frames = seq.frame_count();
  const std::size_t pixels = seq.pixel_count();
  FeatureImage image(w, h, options.degree, options.packing, options.log_base);

  // Pass 1: start frame per pixel (frames, or frames+1 when all saturated).
  std::vector<std::size_t> start(pixels, frames);
  const double sat = seq.saturation_value();
  for (std::size_t p = 0; p < pixels; ++p) {
    std::size_t first = frames;
    while (first > 0 && seq.data()[(first - 1) * pixels + p] < sat) --first;
    start[p] = first;
  }

  // One fitter per distinct start frame.
  const auto all_log_t = detail::log_times(seq.timestamps(), 0, options.log_base);
  std::map<std::size_t, std::shared_ptr<const LogPolyFitter>> fitters;
  std::map<std::size_t, Errc> fitter_errors;
  for (std::size_t p = 0; p < pixels; ++p) {
    const auto s = start[p];
    if (s >= frames || fitters.count(s) || fitter_errors.count(s)) continue;
    try {
      fitters[s] = std::make_shared<const LogPolyFitter>(std::span<const double>(all_log_t).subspan(s), options.degree);
    } catch (const Error& e) {
      fitter_errors.emplace(s, e.code());
    }
  }

  std::vector<std::uint8_t> status(pixels, 0);  // 0 ok, 1 saturated, 2 non-positive, 3 other
  parallel_for(h, [&](std::size_t row) {
    // Gather the row pixel-major so each series is contiguous.
    std::vector<double> block(w * frames);
    for (std::size_t k = 0; k < frames; ++k) {
      const double* src = &seq.data()[k * pixels + row * w];
      for (std::size_t c = 0; c < w; ++c) block[c * frames + k] = src[c];
    }
    std::vector<double> scratch;
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t p = row * w + c;
      if (start[p] >= frames) {
        status[p] = 1;
        continue;
      }
      const auto it = fitters.find(start[p]);
      if (it == fitters.end()) {
        status[p] = 3;
        continue;
      }
      try {
        const auto fit = detail::fit_with(*it->second, std::span<const double>(block).subspan(c * frames, frames),
                                          start[p], options.log_base, scratch);
        const auto feats = pack_features(fit, options.packing);
        std::copy(feats.begin(), feats.end(), image.features(p).begin());
        image.valid[p] = 1;
      } catch (const Error& e) {
        status[p] = e.code() == Errc::non_positive_value ? 2 : 3;
      }
    }
  }, 1);

  if (report) {
    *report = {};
    for (auto s : status) {
      if (s == 0) ++report->fitted;
      else if (s == 1) ++report->all_saturated;
      else if (s == 2) ++report->non_positive;
      else ++report->other_errors;
    }
  }
  return image;
}

// ---------------------------------------------------------------------------
// Feature image files: key=value header, a `data` line, then one CSV row per
// pixel in row-major order: valid flag followed by the features.

inline std::string encode_feature_image(const FeatureImage& img) {
  std::string out = "# tsrnde feature image\n";
  out += "format = tsrnde-features 1\n";
  out += "width = " + std::to_string(img.width) + "\n";
  out += "height = " + std::to_string(img.height) + "\n";
  out += "degree = " + std::to_string(img.degree) + "\n";
  out += std::string("packing = ") + packing_name(img.packing) + "\n";
  out += "log_base = " + text::fmt_double(img.log_base) + "\n";
  out += std::string("scaling_pending = ") + (img.scaling_pending ? "1" : "0") + "\n";
  out += "feature_count = " + std::to_string(img.feature_count) + "\n";
  out += "data\nvalid";
  for (std::size_t f = 0; f < img.feature_count; ++f) out += ",f" + std::to_string(f);
  out += '\n';
  out.reserve(out.size() + img.pixel_count() * (img.feature_count * 24 + 4));
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    out += img.valid[p] ? '1' : '0';
    for (double v : img.features(p)) {
      out += ',';
      out += text::fmt_double(v);
    }
    out += '\n';
  }
  return out;
}

inline FeatureImage decode_feature_image(std::string_view content, std::string_view source = "feature image") {
  const auto marker = content.find("\ndata\n");
  if (marker == std::string_view::npos) fail(Errc::corrupt_file, std::string(source) + ": missing data section");
  const auto kv = text::KeyValueFile::parse(content.substr(0, marker + 1), source);
  if (kv.get_or("format", "") != "tsrnde-features 1")
    fail(Errc::version_mismatch, std::string(source) + ": unsupported feature image format");
  FeatureImage img(static_cast<std::size_t>(kv.get_int("width")), static_cast<std::size_t>(kv.get_int("height")),
                   static_cast<std::size_t>(kv.get_int("degree")), parse_packing(kv.get("packing")),
                   kv.get_double("log_base"));
  img.scaling_pending = kv.get_int("scaling_pending") != 0;
  if (static_cast<std::size_t>(kv.get_int("feature_count")) != img.feature_count)
    fail(Errc::corrupt_file, std::string(source) + ": feature_count does not match degree and packing");
  const auto rows = text::lines(content.substr(marker + 6));
  std::size_t p = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (text::trim(rows[i]).empty()) continue;
    if (p >= img.pixel_count()) fail(Errc::corrupt_file, std::string(source) + ": too many rows");
    const auto fields = text::split(rows[i], ',');
    if (fields.size() != img.feature_count + 1)
      fail(Errc::corrupt_file, std::string(source) + ": row " + std::to_string(p) + " has wrong field count");
    img.valid[p] = text::parse_int(fields[0], source) != 0;
    auto dst = img.features(p);
    for (std::size_t f = 0; f < img.feature_count; ++f) dst[f] = text::parse_double(fields[f + 1], source);
    ++p;
  }
  if (p != img.pixel_count()) fail(Errc::corrupt_file, std::string(source) + ": truncated pixel rows");
  return img;
}

inline void save_feature_image(const std::filesystem::path& path, const FeatureImage& img) {
  text::write_file(path, encode_feature_image(img));
}

inline FeatureImage load_feature_image(const std::filesystem::path& path) {
  return decode_feature_image(text::read_file(path), path.string());
}

}  // namespace tsrnde

#endif
