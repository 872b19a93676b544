#ifndef TSRNDE_PARALLEL_HPP
#define TSRNDE_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tsrnde {

/// Process-wide cap on worker threads (the CLI's --workers). 0 means
/// hardware concurrency.
inline std::atomic<unsigned>& worker_limit() {
  static std::atomic<unsigned> limit{0};
  return limit;
}

inline unsigned worker_count() {
  unsigned n = worker_limit().load();
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

/// Runs body(i) for i in [0, n) over contiguous blocks. Output must be
/// written by index so results do not depend on scheduling. The first
/// exception thrown by any block is rethrown.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, std::size_t min_block = 64) {
  const std::size_t workers =
      std::min<std::size_t>(worker_count(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_block)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t block = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * block;
    const std::size_t hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace tsrnde

#endif
