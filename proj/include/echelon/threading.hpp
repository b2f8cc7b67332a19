#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace echelon {

// Worker count for coarse-grained parallelism (independent runs). Controlled
// by the ECHELON_WORKERS environment variable; results never depend on it.
inline int worker_count() {
  if (const char* env = std::getenv("ECHELON_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Run tasks(0..n-1) across at most `workers` threads. Each task must touch
// only its own outputs; exceptions propagate from the first failing task.
inline void parallel_tasks(int n, const std::function<void(int)>& task,
                           int workers = -1) {
  if (workers <= 0) workers = worker_count();
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) task(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::atomic<int> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        while (true) {
          const int i = next.fetch_add(1);
          if (i >= n) break;
          task(i);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace echelon
