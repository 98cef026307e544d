#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace gm {

// GLYPHMATCH_THREADS caps worker count; 0 or unset means hardware default.
inline int resolve_thread_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("GLYPHMATCH_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return hw;
}

// Minimal fixed pool. run_tasks blocks until every task finished. Tasks are
// claimed by index in order; results must be written to per-task slots so the
// outcome is identical for any worker count.
class ThreadPool {
 public:
  explicit ThreadPool(int n_threads = resolve_thread_count())
      : n_threads_(n_threads < 1 ? 1 : n_threads) {}

  int size() const { return n_threads_; }

  void run_tasks(const std::vector<std::function<void()>>& tasks) {
    if (tasks.empty()) return;
    if (n_threads_ == 1 || tasks.size() == 1) {
      for (const auto& t : tasks) t();
      return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        tasks[i]();
      }
    };
    int n = std::min<int>(n_threads_, static_cast<int>(tasks.size()));
    std::vector<std::thread> threads;
    threads.reserve(n - 1);
    for (int i = 1; i < n; ++i) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
  }

 private:
  int n_threads_;
};

}  // namespace gm
