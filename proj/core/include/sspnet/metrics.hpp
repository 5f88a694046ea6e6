#pragma once

#include <vector>

#include "sspnet/volume.hpp"

namespace ssp {

// Voxel-wise regression quality. R^2 is undefined for a constant target;
// r2_defined is cleared and r2 left at 0 in that case.
struct MetricTriple {
  double mse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;
  bool r2_defined = true;
};

MetricTriple eval_metrics(const Volume& pred, const Volume& target);

// Mean triple; entries with undefined R^2 are excluded from the R^2 mean.
MetricTriple mean_metrics(const std::vector<MetricTriple>& triples);

// Per-volume triples grouped by task -> per-task means -> overall mean of
// the per-task means.
struct TaskedMetrics {
  std::vector<MetricTriple> per_task;
  MetricTriple overall;
};
TaskedMetrics aggregate_by_task(const std::vector<MetricTriple>& per_volume,
                                const std::vector<int>& tasks, int task_count);

// Relative improvement over a baseline, in percent, sign-adjusted so that
// positive always means better: lower-is-better for MSE/MAE, higher for R^2.
struct DeltaImp {
  double mse_pct = 0.0;
  double mae_pct = 0.0;
  double r2_pct = 0.0;
};
DeltaImp delta_imp(const MetricTriple& baseline, const MetricTriple& method);

}  // namespace ssp
