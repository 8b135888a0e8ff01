#pragma once

#include <fbm/core/error.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fbm {

// Worker count: FBM_THREADS when set (must be >= 1), otherwise the number of
// available cores.
inline int worker_count() {
  if (const char* env = std::getenv("FBM_THREADS")) {
    const std::string s = env;
    int n = 0;
    try {
      n = std::stoi(s);
    } catch (const std::exception&) {
      throw UsageError("FBM_THREADS must be a positive integer, got '" + s + "'");
    }
    if (n < 1) throw UsageError("FBM_THREADS must be a positive integer, got '" + s + "'");
    return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n). Work items must be independent; results are
// identical for any worker count as long as fn(i) depends only on i.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         int workers = worker_count()) {
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < w; ++k) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace fbm
