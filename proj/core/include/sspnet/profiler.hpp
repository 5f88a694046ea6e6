#pragma once

// Analytic resource accounting over a built network graph: MACs per layer
// (multiply count; bias adds excluded), parameter totals, and the peak of
// live activation bytes over the execution order. Pure shape arithmetic --
// parameter values are never read.

#include <string>

#include "sspnet/topology.hpp"

namespace ssp {

struct ResourceRow {
  std::string name;
  int64_t macs = 0;
  int64_t params = 0;
  int64_t out_elems = 0;
};

struct ResourceReport {
  TopologyKind kind = TopologyKind::pure3d;
  Shape input_dims;  // per-sample network input dims
  std::vector<ResourceRow> rows;
  int64_t total_macs = 0;
  int64_t total_params = 0;
  int64_t peak_activation_bytes = 0;
};

ResourceReport count_resources(const Network& net, const TopologyConfig& cfg);

std::string render_table(const ResourceReport& report);
std::string report_to_json(const ResourceReport& report);

}  // namespace ssp
