#include "dipole/util.hpp"

#include <algorithm>

namespace dipole {

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t, int)>& body,
                  int workers) {
  if (workers <= 0) workers = default_workers();
  if (n <= 0) return;
  workers = static_cast<int>(std::min<std::int64_t>(workers, n));
  if (workers == 1) {
    body(0, n, 0);
    return;
  }
  std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    std::int64_t lo = w * chunk;
    std::int64_t hi = std::min<std::int64_t>(lo + chunk, n);
    if (lo >= hi) break;
    threads.emplace_back([&body, lo, hi, w] { body(lo, hi, w); });
  }
  for (auto& t : threads) t.join();
}

}  // namespace dipole
