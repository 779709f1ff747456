#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace streetside {

/// Number of workers used when a caller passes threads == 0.
inline unsigned default_thread_count() {
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers in contiguous
/// chunks. fn must write only to index-owned state so the result does not
/// depend on the schedule. The first exception thrown is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = default_thread_count();
  const std::size_t workers = std::min<std::size_t>(threads, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = count * w / workers;
      const std::size_t end = count * (w + 1) / workers;
      pool.emplace_back([&, begin, end] {
        try {
          for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace streetside
