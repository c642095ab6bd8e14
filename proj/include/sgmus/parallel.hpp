#pragma once

// Minimal index-based parallel loop. Work items must be independent; each
// writes only to its own output slot, so results are identical to the serial
// order regardless of thread count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sgmus {

// Global cap on worker threads (CLI --threads). 0 means hardware default.
inline std::size_t& max_threads_setting() {
  static std::size_t value = 0;
  return value;
}

inline void set_max_threads(std::size_t n) { max_threads_setting() = n; }

inline std::size_t effective_threads(std::size_t n_items) {
  std::size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  std::size_t cap = max_threads_setting() == 0 ? hw : max_threads_setting();
  return std::max<std::size_t>(1, std::min(cap, n_items));
}

namespace detail {
inline bool& inside_parallel_region() {
  thread_local bool value = false;
  return value;
}
}  // namespace detail

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  // Nested loops run inline: the outermost level already owns the thread budget.
  const std::size_t workers = detail::inside_parallel_region() ? 1 : effective_threads(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      detail::inside_parallel_region() = true;
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);  // stop handing out work
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sgmus
