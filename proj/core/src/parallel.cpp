#include "sspnet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace ssp {

namespace {
std::atomic<int> g_threads{0};
}

void set_num_threads(int n) { g_threads.store(n < 0 ? 0 : n); }

int num_threads() {
  int n = g_threads.load();
  if (n == 0) {
    unsigned hw = std::thread::hardware_concurrency();
    n = hw == 0 ? 1 : static_cast<int>(hw);
  }
  return n;
}

void parallel_for(int64_t begin, int64_t end, int64_t grain,
                  const std::function<void(int64_t, int64_t)>& fn) {
  const int64_t total = end - begin;
  if (total <= 0) return;
  int workers = num_threads();
  if (grain < 1) grain = 1;
  workers = static_cast<int>(std::min<int64_t>(workers, (total + grain - 1) / grain));
  if (workers <= 1) {
    fn(begin, end);
    return;
  }
  const int64_t chunk = (total + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) {
    int64_t lo = begin + w * chunk;
    int64_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  fn(begin, std::min(end, begin + chunk));
  for (auto& t : pool) t.join();
}

}  // namespace ssp
