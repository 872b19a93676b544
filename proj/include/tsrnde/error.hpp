#ifndef TSRNDE_ERROR_HPP
#define TSRNDE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace tsrnde {

enum class Errc {
  missing_file,
  parse_error,
  dimension_mismatch,
  non_increasing_timestamps,
  out_of_bounds,
  invalid_argument,
  all_saturated,
  non_positive_value,
  underdetermined,
  rank_deficient,
  non_tiling_layout,
  empty_class,
  version_mismatch,
  corrupt_file,
  non_finite,
  divergence,
};

/// Validation errors (bad input) map to exit code 2; everything numerical to 3.
inline bool is_validation(Errc code) {
  switch (code) {
    case Errc::underdetermined:
    case Errc::rank_deficient:
    case Errc::non_finite:
    case Errc::divergence:
    case Errc::all_saturated:
    case Errc::non_positive_value:
      return false;
    default:
      return true;
  }
}

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::missing_file: return "missing-file";
    case Errc::parse_error: return "parse-error";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::non_increasing_timestamps: return "non-increasing-timestamps";
    case Errc::out_of_bounds: return "out-of-bounds";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::all_saturated: return "all-saturated";
    case Errc::non_positive_value: return "non-positive-value";
    case Errc::underdetermined: return "underdetermined";
    case Errc::rank_deficient: return "rank-deficient";
    case Errc::non_tiling_layout: return "non-tiling-layout";
    case Errc::empty_class: return "empty-class";
    case Errc::version_mismatch: return "version-mismatch";
    case Errc::corrupt_file: return "corrupt-file";
    case Errc::non_finite: return "non-finite";
    case Errc::divergence: return "divergence";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace tsrnde

#endif
