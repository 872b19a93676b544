#ifndef TSRNDE_TEXTIO_HPP
#define TSRNDE_TEXTIO_HPP

// Small text helpers shared by every on-disk format: exact number formatting,
// strict number parsing, CSV rows and flat key=value files with [sections].

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "error.hpp"

namespace tsrnde::text {

/// 17 significant digits, enough for an exact double round trip.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view s, std::string_view context = {}) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    fail(Errc::parse_error, "not a number '" + std::string(s) + "'" +
                                (context.empty() ? "" : " in " + std::string(context)));
  return v;
}

inline long long parse_int(std::string_view s, std::string_view context = {}) {
  s = trim(s);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    fail(Errc::parse_error, "not an integer '" + std::string(s) + "'" +
                                (context.empty() ? "" : " in " + std::string(context)));
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

/// Whitespace-separated tokens.
inline std::vector<std::string_view> words(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r' || s[i] == '\n')) ++i;
    std::size_t j = i;
    while (j < s.size() && !(s[j] == ' ' || s[j] == '\t' || s[j] == '\r' || s[j] == '\n')) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::vector<double> parse_doubles(std::string_view s, char sep, std::string_view context = {}) {
  std::vector<double> out;
  if (sep == ' ') {
    for (auto w : words(s)) out.push_back(parse_double(w, context));
  } else {
    for (auto f : split(s, sep)) out.push_back(parse_double(f, context));
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::missing_file, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(Errc::missing_file, "write failed for " + path.string());
}

/// Lines with LF or CRLF endings; the trailing '\r' is dropped.
inline std::vector<std::string_view> lines(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < s.size()) {
    auto pos = s.find('\n', start);
    if (pos == std::string_view::npos) pos = s.size();
    auto line = s.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = pos + 1;
  }
  return out;
}

/// Ordered key=value entries. Keys inside a `[section]` are stored as
/// `section.key`. Repeated keys are kept.
class KeyValueFile {
 public:
  using Entry = std::pair<std::string, std::string>;

  KeyValueFile() = default;

  static KeyValueFile parse(std::string_view content, std::string_view source = "key-value file") {
    KeyValueFile kv;
    std::string section;
    int lineno = 0;
    for (auto raw : lines(content)) {
      ++lineno;
      auto line = trim(raw);
      if (line.empty() || line.front() == '#' || line.front() == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          fail(Errc::parse_error, std::string(source) + ":" + std::to_string(lineno) + ": bad section header");
        section = std::string(trim(line.substr(1, line.size() - 2)));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        fail(Errc::parse_error, std::string(source) + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key(trim(line.substr(0, eq)));
      if (!section.empty()) key = section + "." + key;
      kv.entries_.emplace_back(std::move(key), std::string(trim(line.substr(eq + 1))));
    }
    return kv;
  }

  static KeyValueFile load(const std::filesystem::path& path) {
    return parse(read_file(path), path.string());
  }

  bool has(std::string_view key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return true;
    return false;
  }

  /// Last value for `key`; throws parse_error when absent.
  const std::string& get(std::string_view key) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
      if (it->first == key) return it->second;
    fail(Errc::parse_error, "missing key '" + std::string(key) + "'");
  }

  std::string get_or(std::string_view key, std::string fallback) const {
    return has(key) ? get(key) : fallback;
  }
  double get_double(std::string_view key) const { return parse_double(get(key), key); }
  double get_double_or(std::string_view key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  long long get_int(std::string_view key) const { return parse_int(get(key), key); }
  long long get_int_or(std::string_view key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  std::vector<std::string> get_all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (k == key) out.push_back(v);
    return out;
  }

  void set(std::string key, std::string value) {
    for (auto& [k, v] : entries_)
      if (k == key) {
        v = std::move(value);
        return;
      }
    entries_.emplace_back(std::move(key), std::move(value));
  }
  void add(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }

  const std::vector<Entry>& entries() const { return entries_; }

  /// Serializes without sections (keys keep their dotted prefix).
  std::string str() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace tsrnde::text

#endif
