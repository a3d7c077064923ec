#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace thn {

// Worker count: explicit request, else THN_THREADS, else the hardware.
inline int thread_budget(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("THN_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(0..n-1) across `workers` threads. Callers own determinism: each
// index writes only its own slot and any reduction happens afterwards in
// index order, so results are identical for every worker count.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace thn
