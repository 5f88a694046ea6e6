#pragma once

#include <cstdint>
#include <functional>

namespace ssp {

// Global worker count used by parallel_for. 0 (default) means
// "hardware concurrency". Results never depend on the thread count:
// work is always partitioned over output elements, so every element is
// produced by exactly one thread with a fixed arithmetic order.
void set_num_threads(int n);
int num_threads();

// Runs fn(lo, hi) over a partition of [begin, end). Serial when the range
// is below `grain` or only one worker is configured.
void parallel_for(int64_t begin, int64_t end, int64_t grain,
                  const std::function<void(int64_t, int64_t)>& fn);

}  // namespace ssp
