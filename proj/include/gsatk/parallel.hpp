#pragma once

// Deterministic task parallelism: tasks write to preassigned slots, so the
// result is identical for any worker count.

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gsatk {

/// Runs fn(task_index) for every index in [0, n_tasks) on up to `workers`
/// threads. The first exception thrown by a task is rethrown after all
/// workers stop.
template <typename Fn>
void parallel_for(std::size_t n_tasks, int workers, Fn&& fn) {
  if (n_tasks == 0) return;
  const std::size_t n_threads =
      std::min<std::size_t>(std::max(workers, 1), n_tasks);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n_tasks);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace gsatk
