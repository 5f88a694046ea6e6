#pragma once

// JSON <-> config plumbing shared by the CLI, checkpoints and tests.
// Unknown keys are rejected so a typo in a run config fails loudly instead
// of silently falling back to a default.

#include <string>

#include "sspnet/pipeline.hpp"
#include "sspnet/topology.hpp"

namespace ssp {

std::string topology_to_json_string(const TopologyConfig& cfg);
TopologyConfig topology_from_json_string(const std::string& text);

struct RunConfig {
  TopologyConfig topology;
  TrainConfig train;
  std::string manifest;  // dataset manifest path
  std::string out_dir;
};

RunConfig run_config_from_json_string(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json_string(const RunConfig& cfg);
void save_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace ssp
