#include "sspnet/metrics.hpp"

#include <cmath>

namespace ssp {

MetricTriple eval_metrics(const Volume& pred, const Volume& target) {
  check(pred.depth == target.depth && pred.height == target.height &&
            pred.width == target.width,
        errc::contract, "eval_metrics: shape mismatch");
  const int64_t n = pred.numel();
  double se = 0, ae = 0, tsum = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.data[static_cast<size_t>(i)]) -
                     static_cast<double>(target.data[static_cast<size_t>(i)]);
    se += d * d;
    ae += std::abs(d);
    tsum += static_cast<double>(target.data[static_cast<size_t>(i)]);
  }
  const double tmean = tsum / static_cast<double>(n);
  double tvar = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(target.data[static_cast<size_t>(i)]) - tmean;
    tvar += d * d;
  }
  MetricTriple m;
  m.mse = se / static_cast<double>(n);
  m.mae = ae / static_cast<double>(n);
  if (tvar < 1e-12) {
    m.r2_defined = false;
    m.r2 = 0.0;
  } else {
    m.r2 = 1.0 - se / tvar;
  }
  return m;
}

MetricTriple mean_metrics(const std::vector<MetricTriple>& triples) {
  check(!triples.empty(), errc::contract, "mean_metrics: empty input");
  MetricTriple out;
  int r2_count = 0;
  for (const auto& t : triples) {
    out.mse += t.mse;
    out.mae += t.mae;
    if (t.r2_defined) {
      out.r2 += t.r2;
      ++r2_count;
    }
  }
  const double n = static_cast<double>(triples.size());
  out.mse /= n;
  out.mae /= n;
  if (r2_count > 0)
    out.r2 /= static_cast<double>(r2_count);
  else
    out.r2_defined = false;
  return out;
}

TaskedMetrics aggregate_by_task(const std::vector<MetricTriple>& per_volume,
                                const std::vector<int>& tasks, int task_count) {
  check(per_volume.size() == tasks.size(), errc::contract,
        "aggregate_by_task: per-volume metrics and task list differ in length");
  TaskedMetrics out;
  std::vector<MetricTriple> task_means;
  for (int t = 0; t < task_count; ++t) {
    std::vector<MetricTriple> bucket;
    for (size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i] == t) bucket.push_back(per_volume[i]);
    if (bucket.empty()) {
      out.per_task.push_back(MetricTriple{0, 0, 0, false});
      continue;
    }
    MetricTriple m = mean_metrics(bucket);
    out.per_task.push_back(m);
    task_means.push_back(m);
  }
  check(!task_means.empty(), errc::contract, "aggregate_by_task: no populated task");
  out.overall = mean_metrics(task_means);
  return out;
}

DeltaImp delta_imp(const MetricTriple& baseline, const MetricTriple& method) {
  check(baseline.mse != 0.0 && baseline.mae != 0.0 && baseline.r2 != 0.0, errc::contract,
        "delta_imp: baseline entries must be nonzero");
  DeltaImp d;
  d.mse_pct = 100.0 * (baseline.mse - method.mse) / baseline.mse;
  d.mae_pct = 100.0 * (baseline.mae - method.mae) / baseline.mae;
  d.r2_pct = 100.0 * (method.r2 - baseline.r2) / baseline.r2;
  return d;
}

}  // namespace ssp
