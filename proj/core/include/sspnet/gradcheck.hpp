#pragma once

// Central finite-difference gradient oracle. Lives in 64-bit only; float
// gradients are validated by casting the op inputs up. Independent of the
// backward implementations it is used to check.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "sspnet/errors.hpp"
#include "sspnet/rng.hpp"
#include "sspnet/tensor.hpp"

namespace ssp {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t checked = 0;
};

// One tensor to perturb plus the analytic gradient claimed for it.
struct GradCheckEntry {
  Tensor64* value;
  const Tensor64* analytic;
};

// loss() must recompute the scalar objective from the current contents of
// the entry tensors. Checks up to max_per_tensor sampled elements per entry
// (all elements when <= 0). eps is scaled per element by max(1,|x|).
//
// abs_floor: absolute disagreements at or below this count as exact. Central
// differences of a deep composite carry a fixed noise floor (~1e-9 for a
// double-precision loss), so a pure relative-error criterion is unbounded on
// elements whose true gradient sits under that floor. Zero keeps the strict
// per-element behavior for single-op checks.
template <typename Loss>
GradCheckResult grad_check(Loss&& loss, const std::vector<GradCheckEntry>& entries, double eps,
                           int64_t max_per_tensor = -1, uint64_t seed = 0x9d5ec,
                           double abs_floor = 0.0) {
  GradCheckResult res;
  for (const auto& entry : entries) {
    Tensor64& x = *entry.value;
    const Tensor64& an = *entry.analytic;
    check(an.same_shape(x), errc::contract, "grad_check: analytic gradient shape mismatch");
    const int64_t n = x.numel();
    std::vector<int64_t> idx;
    if (max_per_tensor > 0 && n > max_per_tensor) {
      Rng rng(mix_seed(seed, static_cast<uint64_t>(res.checked) + 0x51));
      idx.reserve(static_cast<size_t>(max_per_tensor));
      for (int64_t i = 0; i < max_per_tensor; ++i)
        idx.push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
    } else {
      idx.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    }
    for (int64_t i : idx) {
      const double orig = x[i];
      const double h = eps * std::max(1.0, std::abs(orig));
      x[i] = orig + h;
      const double fp = loss();
      x[i] = orig - h;
      const double fm = loss();
      x[i] = orig;
      check(std::isfinite(fp) && std::isfinite(fm), errc::numeric,
            "grad_check: non-finite loss during perturbation");
      const double fd = (fp - fm) / (2.0 * h);
      const double a = an[i];
      check(std::isfinite(a), errc::numeric, "grad_check: non-finite analytic gradient");
      const double denom = std::max({std::abs(fd), std::abs(a), 1e-8});
      const double rel = std::abs(fd - a) <= abs_floor ? 0.0 : std::abs(fd - a) / denom;
      if (rel > res.max_rel_err) res.max_rel_err = rel;
      res.checked += 1;
    }
  }
  return res;
}

}  // namespace ssp
