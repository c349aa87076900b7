#ifndef MIXSEL_PARALLEL_HPP
#define MIXSEL_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mixsel {

// Worker count used when a caller passes threads <= 0: the MIXSEL_THREADS
// environment variable if set, otherwise the hardware concurrency.
inline int default_threads() {
  if (const char* env = std::getenv("MIXSEL_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, count). fn must confine its writes to per-index
// slots so the outcome does not depend on scheduling; reduce in index order
// afterwards for deterministic results.
inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) threads = default_threads();
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mixsel

#endif
