#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace rplgmr {

/// Runs body(begin, end) over a partition of [0, n). Intended for per-item
/// work that writes disjoint slots; results must not depend on the
/// partitioning, so reductions belong in a fixed-order pass afterwards.
inline void parallel_for(int n, const std::function<void(int, int)>& body) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  int threads = std::max(1, std::min(hw, n));
  if (threads <= 1 || n < 1024) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    int begin = t * chunk;
    int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(body, begin, end);
  }
  for (auto& th : pool) th.join();
}

}  // namespace rplgmr
