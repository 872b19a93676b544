#ifndef TSRNDE_SYNTHGEN_HPP
#define TSRNDE_SYNTHGEN_HPP

// Synthetic flash-thermography videos: rectangular regions, each cooling
// along an analytic temperature-time profile, plus per-pixel Gaussian noise
// and a saturation clamp.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "ingest.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "textio.hpp"

namespace tsrnde {

enum class ProfileKind { power_law, adiabatic_plate, log_polynomial };

inline const char* profile_kind_name(ProfileKind k) {
  switch (k) {
    case ProfileKind::power_law: return "power-law";
    case ProfileKind::adiabatic_plate: return "adiabatic-plate";
    case ProfileKind::log_polynomial: return "log-polynomial";
  }
  return "?";
}

/// Surface temperature after an instantaneous flash.
///
///  - power-law:        A * t^b (b = -1/2 for a semi-infinite solid)
///  - adiabatic-plate:  A * t^(-1/2) * [1 + 2 * sum_n R^n exp(-n^2 L^2 / (alpha t))]
///                      a layer of thickness L over an interface with
///                      reflection (contrast) factor R in [0, 1]; R = 1 is a
///                      fully insulating back wall.
///  - log-polynomial:   base^(sum_i c_i (log_base t)^i)
///
/// Lengths and diffusivity only need consistent units (mm and mm^2/s here).
struct TemperatureProfile {
  ProfileKind kind = ProfileKind::power_law;
  double amplitude = 1.0;
  double exponent = -0.5;
  double thickness = 0.0;
  double diffusivity = 0.0;
  double reflection = 1.0;
  std::vector<double> coefficients;
  double log_base = 10.0;

  static TemperatureProfile power_law(double amplitude, double exponent) {
    TemperatureProfile p;
    p.kind = ProfileKind::power_law;
    p.amplitude = amplitude;
    p.exponent = exponent;
    return p;
  }
  static TemperatureProfile adiabatic_plate(double amplitude, double thickness, double diffusivity,
                                            double reflection = 1.0) {
    TemperatureProfile p;
    p.kind = ProfileKind::adiabatic_plate;
    p.amplitude = amplitude;
    p.thickness = thickness;
    p.diffusivity = diffusivity;
    p.reflection = reflection;
    return p;
  }
  static TemperatureProfile log_polynomial(std::vector<double> coefficients, double log_base = 10.0) {
    TemperatureProfile p;
    p.kind = ProfileKind::log_polynomial;
    p.coefficients = std::move(coefficients);
    p.log_base = log_base;
    return p;
  }

  /// Value at t = 1 s; the reference for relative noise levels.
  double reference_amplitude() const {
    if (kind == ProfileKind::log_polynomial) return coefficients.empty() ? 1.0 : std::pow(log_base, coefficients[0]);
    return amplitude;
  }

  void validate() const {
    switch (kind) {
      case ProfileKind::power_law:
        if (!(amplitude > 0.0)) fail(Errc::invalid_argument, "power-law amplitude must be > 0");
        break;
      case ProfileKind::adiabatic_plate:
        if (!(amplitude > 0.0) || !(thickness > 0.0) || !(diffusivity > 0.0))
          fail(Errc::invalid_argument, "adiabatic-plate needs amplitude, thickness and diffusivity > 0");
        if (!(reflection >= 0.0 && reflection <= 1.0))
          fail(Errc::invalid_argument, "adiabatic-plate reflection must lie in [0, 1]");
        break;
      case ProfileKind::log_polynomial:
        if (coefficients.empty()) fail(Errc::invalid_argument, "log-polynomial needs coefficients");
        if (!(log_base > 1.0)) fail(Errc::invalid_argument, "log-polynomial base must be > 1");
        break;
    }
  }

  friend bool operator==(const TemperatureProfile&, const TemperatureProfile&) = default;
};

namespace detail {

// 1 + 2 * sum_{n>=1} r^n exp(-n^2 x), truncated once the next term drops
// below 1e-12 of the running sum.
inline double plate_series(double x, double r) {
  constexpr double tol = 1e-12;
  if (r == 1.0 && x < 1.0) {
    // Jacobi theta transform for slowly decaying terms:
    // sum_{n in Z} e^{-n^2 x} = sqrt(pi/x) * sum_{n in Z} e^{-pi^2 n^2 / x}
    const double y = std::numbers::pi * std::numbers::pi / x;
    double sum = 1.0;
    for (int n = 1;; ++n) {
      const double term = 2.0 * std::exp(-static_cast<double>(n) * n * y);
      sum += term;
      if (term < tol * sum) break;
    }
    return std::sqrt(std::numbers::pi / x) * sum;
  }
  double sum = 1.0;
  double rn = 1.0;
  for (long n = 1;; ++n) {
    rn *= r;
    const double term = 2.0 * rn * std::exp(-static_cast<double>(n) * static_cast<double>(n) * x);
    sum += term;
    if (term < tol * sum) break;
  }
  return sum;
}

}  // namespace detail

inline double eval_profile(const TemperatureProfile& p, double t) {
  if (!(t > 0.0)) fail(Errc::invalid_argument, "profile evaluated at t <= 0");
  switch (p.kind) {
    case ProfileKind::power_law:
      return p.amplitude * std::pow(t, p.exponent);
    case ProfileKind::adiabatic_plate: {
      const double x = p.thickness * p.thickness / (p.diffusivity * t);
      return p.amplitude / std::sqrt(t) * detail::plate_series(x, p.reflection);
    }
    case ProfileKind::log_polynomial: {
      const double lt = std::log(t) / std::log(p.log_base);
      double acc = 0.0;
      for (auto it = p.coefficients.rbegin(); it != p.coefficients.rend(); ++it) acc = acc * lt + *it;
      return std::pow(p.log_base, acc);
    }
  }
  return 0.0;
}

struct Region {
  Rect rect;
  std::uint8_t class_id = 0;
  TemperatureProfile profile;
  friend bool operator==(const Region&, const Region&) = default;
};

struct RegionLayout {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Region> regions;

  /// Region index covering each pixel; throws when the regions do not tile
  /// the canvas exactly once.
  std::vector<std::uint32_t> region_index() const {
    constexpr auto none = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> owner(width * height, none);
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const auto& r = regions[i].rect;
      if (r.area() == 0 || r.x0 + r.width > width || r.y0 + r.height > height)
        fail(Errc::non_tiling_layout, "region " + std::to_string(i) + " is empty or leaves the canvas");
      for (std::size_t y = r.y0; y < r.y0 + r.height; ++y)
        for (std::size_t x = r.x0; x < r.x0 + r.width; ++x) {
          auto& o = owner[y * width + x];
          if (o != none) fail(Errc::non_tiling_layout, "regions overlap at (" + std::to_string(x) + "," + std::to_string(y) + ")");
          o = static_cast<std::uint32_t>(i);
        }
    }
    for (std::size_t i = 0; i < owner.size(); ++i)
      if (owner[i] == none)
        fail(Errc::non_tiling_layout, "pixel (" + std::to_string(i % width) + "," + std::to_string(i / width) + ") is uncovered");
    return owner;
  }

  /// Ground truth: class id per pixel, all valid.
  LabelMask label_mask() const {
    const auto owner = region_index();
    std::size_t classes = 0;
    for (const auto& r : regions) classes = std::max<std::size_t>(classes, r.class_id + 1u);
    LabelMask mask(width, height, classes);
    for (std::size_t i = 0; i < owner.size(); ++i) mask.labels[i] = regions[owner[i]].class_id;
    return mask;
  }
};

struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

struct Clamp {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

/// Renders region profiles plus i.i.d. Gaussian noise, clamped to [lo, hi].
/// Each pixel draws from its own stream seeded by (seed, row, col), so the
/// output does not depend on the rendering schedule. A finite `hi` becomes
/// the sequence's saturation value.
inline FrameSequence render_video(const RegionLayout& layout, std::span<const double> timestamps,
                                  const NoiseSpec& noise, const Clamp& clamp = {}) {
  if (!(noise.sigma >= 0.0)) fail(Errc::invalid_argument, "noise sigma must be >= 0");
  if (!(clamp.lo <= clamp.hi)) fail(Errc::invalid_argument, "clamp lo > hi");
  for (std::size_t k = 0; k < timestamps.size(); ++k)
    if (!(timestamps[k] > 0.0) || (k > 0 && !(timestamps[k] > timestamps[k - 1])))
      fail(Errc::non_increasing_timestamps, "render timestamps must be > 0 and strictly increasing");
  const auto owner = layout.region_index();

  std::vector<std::vector<double>> clean(layout.regions.size());
  for (std::size_t i = 0; i < layout.regions.size(); ++i) {
    layout.regions[i].profile.validate();
    clean[i].reserve(timestamps.size());
    for (double t : timestamps) clean[i].push_back(eval_profile(layout.regions[i].profile, t));
  }

  const std::size_t frames = timestamps.size();
  const std::size_t pixels = layout.width * layout.height;
  std::vector<double> data(pixels * frames);
  parallel_for(layout.height, [&](std::size_t row) {
    for (std::size_t col = 0; col < layout.width; ++col) {
      const std::size_t p = row * layout.width + col;
      const auto& series = clean[owner[p]];
      Rng rng(derive_seed(noise.seed, {row, col}));
      for (std::size_t k = 0; k < frames; ++k) {
        double v = series[k];
        if (noise.sigma > 0.0) v += noise.sigma * standard_normal(rng);
        data[k * pixels + p] = std::clamp(v, clamp.lo, clamp.hi);
      }
    }
  }, 1);
  const double saturation = std::isfinite(clamp.hi) ? clamp.hi : std::numeric_limits<double>::infinity();
  return FrameSequence(layout.width, layout.height, std::vector<double>(timestamps.begin(), timestamps.end()),
                       std::move(data), saturation);
}

/// Centered-rectangle scene: one class inside `inner`, another in the border
/// (tiled as four strips).
inline RegionLayout composite_layout(std::size_t width, std::size_t height, const Rect& inner, std::uint8_t inner_class,
                                     std::uint8_t outer_class, const TemperatureProfile& inner_profile,
                                     const TemperatureProfile& outer_profile) {
  if (inner.area() == 0 || inner.x0 == 0 || inner.y0 == 0 || inner.x0 + inner.width >= width ||
      inner.y0 + inner.height >= height)
    fail(Errc::out_of_bounds, "inner rectangle must lie strictly inside the canvas");
  RegionLayout layout{width, height, {}};
  layout.regions.push_back({inner, inner_class, inner_profile});
  const std::size_t bottom = inner.y0 + inner.height;
  const std::size_t right = inner.x0 + inner.width;
  layout.regions.push_back({Rect{0, 0, width, inner.y0}, outer_class, outer_profile});
  layout.regions.push_back({Rect{0, bottom, width, height - bottom}, outer_class, outer_profile});
  layout.regions.push_back({Rect{0, inner.y0, inner.x0, inner.height}, outer_class, outer_profile});
  layout.regions.push_back({Rect{right, inner.y0, width - right, inner.height}, outer_class, outer_profile});
  return layout;
}

/// Centered rectangle of the given size.
inline Rect centered_rect(std::size_t width, std::size_t height, std::size_t inner_w, std::size_t inner_h) {
  return Rect{(width - std::min(width, inner_w)) / 2, (height - std::min(height, inner_h)) / 2, inner_w, inner_h};
}

/// Physical parameters of the four-quadrant delamination surrogate.
struct FourClassMaterial {
  double defect_depth = 5.0;     // mm below the heated surface
  double base_thickness = 10.0;  // mm, full sample depth seen by sound material
  double diffusivity = 0.1;      // mm^2/s (PLA order of magnitude)
  double layer_height = 0.3;     // mm; a gap of one full layer is a complete disbond
  double amplitude = 100.0;      // surface temperature rise at t = 1 s
};

/// Interface reflection factor for a delamination gap: the gap as a fraction
/// of layer height, capped at 1.
inline double gap_contrast(double gap, double layer_height) { return std::min(1.0, gap / layer_height); }

/// Quadrants in reading order (top-left, top-right, bottom-left, bottom-right)
/// get classes 0..3. A zero gap is sound material: an insulated plate of the
/// full base thickness. A positive gap puts a partially reflecting interface
/// at the defect depth, with contrast growing with the gap.
inline std::pair<RegionLayout, LabelMask> four_class_scene(std::size_t width, std::size_t height,
                                                           const std::array<double, 4>& gaps,
                                                           const FourClassMaterial& material = {}) {
  if (width < 2 || height < 2) fail(Errc::invalid_argument, "four-class scene needs at least 2x2 pixels");
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    if (!(gaps[i] >= 0.0)) fail(Errc::invalid_argument, "gap thickness must be >= 0");
    if (i > 0 && gaps[i] < gaps[i - 1]) fail(Errc::invalid_argument, "gap thicknesses must be non-decreasing");
  }
  if (!(material.defect_depth > 0.0) || !(material.base_thickness > material.defect_depth))
    fail(Errc::invalid_argument, "defect depth must be positive and shallower than the base thickness");
  const std::size_t half_w = width / 2;
  const std::size_t half_h = height / 2;
  const std::array<Rect, 4> quads{Rect{0, 0, half_w, half_h}, Rect{half_w, 0, width - half_w, half_h},
                                  Rect{0, half_h, half_w, height - half_h},
                                  Rect{half_w, half_h, width - half_w, height - half_h}};
  RegionLayout layout{width, height, {}};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto profile =
        gaps[i] == 0.0
            ? TemperatureProfile::adiabatic_plate(material.amplitude, material.base_thickness, material.diffusivity, 1.0)
            : TemperatureProfile::adiabatic_plate(material.amplitude, material.defect_depth, material.diffusivity,
                                                  gap_contrast(gaps[i], material.layer_height));
    layout.regions.push_back({quads[i], static_cast<std::uint8_t>(i), profile});
  }
  auto mask = layout.label_mask();
  mask.class_count = 4;
  return {std::move(layout), std::move(mask)};
}

inline std::vector<double> uniform_timestamps(double fps, std::size_t frames) {
  if (!(fps > 0.0) || frames == 0) fail(Errc::invalid_argument, "fps must be > 0 and frames >= 1");
  std::vector<double> t(frames);
  for (std::size_t k = 0; k < frames; ++k) t[k] = static_cast<double>(k + 1) / fps;
  return t;
}

// ---------------------------------------------------------------------------
// Scene description files

/// Everything needed to render one video.
struct Scene {
  RegionLayout layout;
  std::vector<double> timestamps;
  NoiseSpec noise;
  Clamp clamp;
  std::size_t class_count = 0;

  FrameSequence render() const { return render_video(layout, timestamps, noise, clamp); }
  LabelMask truth() const {
    auto mask = layout.label_mask();
    mask.class_count = std::max(mask.class_count, class_count);
    return mask;
  }
};

/// Parses "<kind> <params...>":
///   power-law <A> <b>
///   adiabatic-plate <A> <L> <alpha> [<R>]
///   log-polynomial <base> <c0> <c1> ...
inline TemperatureProfile parse_profile(std::string_view spec) {
  const auto w = text::words(spec);
  if (w.empty()) fail(Errc::parse_error, "empty profile");
  auto num = [&](std::size_t i) {
    if (i >= w.size()) fail(Errc::parse_error, "profile '" + std::string(spec) + "' is missing parameters");
    return text::parse_double(w[i], "profile");
  };
  TemperatureProfile p;
  if (w[0] == "power-law") {
    if (w.size() != 3) fail(Errc::parse_error, "power-law takes <A> <b>");
    p = TemperatureProfile::power_law(num(1), num(2));
  } else if (w[0] == "adiabatic-plate") {
    if (w.size() != 4 && w.size() != 5) fail(Errc::parse_error, "adiabatic-plate takes <A> <L> <alpha> [<R>]");
    p = TemperatureProfile::adiabatic_plate(num(1), num(2), num(3), w.size() == 5 ? num(4) : 1.0);
  } else if (w[0] == "log-polynomial") {
    std::vector<double> c;
    for (std::size_t i = 2; i < w.size(); ++i) c.push_back(num(i));
    p = TemperatureProfile::log_polynomial(std::move(c), num(1));
  } else {
    fail(Errc::parse_error, "unknown profile kind '" + std::string(w[0]) + "'");
  }
  p.validate();
  return p;
}

inline std::string format_profile(const TemperatureProfile& p) {
  std::string s = profile_kind_name(p.kind);
  auto add = [&](double v) { s += " " + text::fmt_double(v); };
  switch (p.kind) {
    case ProfileKind::power_law: add(p.amplitude); add(p.exponent); break;
    case ProfileKind::adiabatic_plate: add(p.amplitude); add(p.thickness); add(p.diffusivity); add(p.reflection); break;
    case ProfileKind::log_polynomial:
      add(p.log_base);
      for (double c : p.coefficients) add(c);
      break;
  }
  return s;
}

/// Scene file keys:
///   width, height                 canvas
///   fps, frames | timestamps      time axis (timestamps = space separated list)
///   clamp = <lo> <hi>             hi may be "inf"
///   noise_sigma | noise_sigma_rel noise level; relative to the largest
///                                 profile amplitude at t = 1 s (default 0.005)
///   noise_seed
///   layout = regions | uniform | composite | four-class
///     regions:    region = <x0> <y0> <w> <h> <class> <profile...>
///     uniform:    class, profile
///     composite:  inner = <x0> <y0> <w> <h>, inner_class, outer_class,
///                 inner_profile, outer_profile
///     four-class: gaps = g0 g1 g2 g3, defect_depth, base_thickness,
///                 diffusivity, layer_height, amplitude
inline Scene parse_scene(const text::KeyValueFile& kv) {
  Scene scene;
  const auto width = static_cast<std::size_t>(kv.get_int("width"));
  const auto height = static_cast<std::size_t>(kv.get_int("height"));
  if (width == 0 || height == 0) fail(Errc::parse_error, "scene width/height must be >= 1");
  if (kv.has("timestamps")) {
    scene.timestamps = text::parse_doubles(kv.get("timestamps"), ' ', "timestamps");
  } else {
    scene.timestamps = uniform_timestamps(kv.get_double("fps"), static_cast<std::size_t>(kv.get_int("frames")));
  }
  if (kv.has("clamp")) {
    const auto w = text::words(kv.get("clamp"));
    if (w.size() != 2) fail(Errc::parse_error, "clamp takes <lo> <hi>");
    scene.clamp.lo = text::parse_double(w[0], "clamp");
    scene.clamp.hi = w[1] == "inf" ? std::numeric_limits<double>::infinity() : text::parse_double(w[1], "clamp");
  }
  const auto kind = kv.get_or("layout", "regions");
  scene.layout.width = width;
  scene.layout.height = height;
  if (kind == "regions") {
    for (const auto& line : kv.get_all("region")) {
      const auto w = text::words(line);
      if (w.size() < 6) fail(Errc::parse_error, "region takes <x0> <y0> <w> <h> <class> <profile...>");
      Rect r{static_cast<std::size_t>(text::parse_int(w[0])), static_cast<std::size_t>(text::parse_int(w[1])),
             static_cast<std::size_t>(text::parse_int(w[2])), static_cast<std::size_t>(text::parse_int(w[3]))};
      const auto cls = static_cast<std::uint8_t>(text::parse_int(w[4]));
      const auto profile_start = line.find(std::string(w[5]));
      scene.layout.regions.push_back({r, cls, parse_profile(std::string_view(line).substr(profile_start))});
    }
    if (scene.layout.regions.empty()) fail(Errc::parse_error, "scene defines no regions");
  } else if (kind == "uniform") {
    scene.layout.regions.push_back({Rect{0, 0, width, height}, static_cast<std::uint8_t>(kv.get_int_or("class", 0)),
                                    parse_profile(kv.get("profile"))});
  } else if (kind == "composite") {
    const auto w = text::words(kv.get("inner"));
    if (w.size() != 4) fail(Errc::parse_error, "inner takes <x0> <y0> <w> <h>");
    Rect inner{static_cast<std::size_t>(text::parse_int(w[0])), static_cast<std::size_t>(text::parse_int(w[1])),
               static_cast<std::size_t>(text::parse_int(w[2])), static_cast<std::size_t>(text::parse_int(w[3]))};
    scene.layout = composite_layout(width, height, inner, static_cast<std::uint8_t>(kv.get_int("inner_class")),
                                    static_cast<std::uint8_t>(kv.get_int("outer_class")),
                                    parse_profile(kv.get("inner_profile")), parse_profile(kv.get("outer_profile")));
  } else if (kind == "four-class") {
    const auto g = text::parse_doubles(kv.get("gaps"), ' ', "gaps");
    if (g.size() != 4) fail(Errc::parse_error, "four-class scenes need exactly 4 gaps");
    FourClassMaterial m;
    m.defect_depth = kv.get_double_or("defect_depth", m.defect_depth);
    m.base_thickness = kv.get_double_or("base_thickness", m.base_thickness);
    m.diffusivity = kv.get_double_or("diffusivity", m.diffusivity);
    m.layer_height = kv.get_double_or("layer_height", m.layer_height);
    m.amplitude = kv.get_double_or("amplitude", m.amplitude);
    scene.layout = four_class_scene(width, height, {g[0], g[1], g[2], g[3]}, m).first;
    scene.class_count = 4;
  } else {
    fail(Errc::parse_error, "unknown layout '" + kind + "'");
  }
  scene.layout.region_index();  // tiling check

  double reference = 0.0;
  for (const auto& r : scene.layout.regions) reference = std::max(reference, r.profile.reference_amplitude());
  scene.noise.sigma = kv.has("noise_sigma") ? kv.get_double("noise_sigma")
                                            : kv.get_double_or("noise_sigma_rel", 0.005) * reference;
  scene.noise.seed = static_cast<std::uint64_t>(kv.get_int_or("noise_seed", 0));
  if (!(scene.noise.sigma >= 0.0)) fail(Errc::parse_error, "noise sigma must be >= 0");
  return scene;
}

inline Scene load_scene(const std::filesystem::path& path) { return parse_scene(text::KeyValueFile::load(path)); }

}  // namespace tsrnde

#endif
