#pragma once

// Builders for the four network layouts over a shared residual-UNet
// skeleton: pure 2D, pure 3D, and the two hybrids that cross between 3D
// and 2D stages through depth<->channel transforms. Every built network
// ends in a task-conditioned head: a controller maps the pooled bottleneck
// feature joined with the one-hot task code to the weights of a small
// generated 1x1 head, followed by a static output head.

#include <array>
#include <cstdint>
#include <string>

#include "sspnet/dim_transform.hpp"
#include "sspnet/network.hpp"
#include "sspnet/zinterp.hpp"

namespace ssp {

enum class TopologyKind { pure2d, pure3d, hybrid_3to2d, hybrid_2to3d };

const char* topology_kind_name(TopologyKind k);
TopologyKind parse_topology_kind(const std::string& s);

struct TopologyConfig {
  TopologyKind kind = TopologyKind::hybrid_3to2d;
  std::array<int64_t, 5> encoder_channels{32, 64, 128, 256, 256};
  int64_t u_dim = 256;
  int64_t patch_z = 32, patch_h = 128, patch_w = 128;
  InterpKind interp = InterpKind::prefix;
  InterpMode interp_mode = InterpMode::nearest;
  ProjectionSpace projection_space = ProjectionSpace::embed3d;
  int task_count = 12;
  int ratio = 1;

  // Depth of the tensor the network itself consumes: the dense patch depth
  // under prefix interpolation, the imaging depth otherwise.
  int64_t net_input_depth() const {
    return interp == InterpKind::prefix ? patch_z : patch_z / ratio;
  }

  bool has_2d_decoder() const {
    return kind == TopologyKind::pure2d || kind == TopologyKind::hybrid_3to2d;
  }

  bool operator==(const TopologyConfig&) const = default;
};

// Encoder depth ladder: halve while the depth stays even, never below 1.
// H and W always halve (they must be divisible by 2^4).
std::array<int64_t, 5> depth_ladder(int64_t entry_depth);

// Throws errc::config on any violated invariant (patch divisibility,
// interp=none on a 3D decoder, projection divisibility at any level, ...).
void validate_topology(const TopologyConfig& cfg);

template <typename T>
NetworkT<T> build_network_t(const TopologyConfig& cfg, uint64_t init_seed);

inline Network build_network(const TopologyConfig& cfg, uint64_t init_seed) {
  return build_network_t<float>(cfg, init_seed);
}

extern template NetworkT<float> build_network_t<float>(const TopologyConfig&, uint64_t);
extern template NetworkT<double> build_network_t<double>(const TopologyConfig&, uint64_t);

// One-hot task code e_l of length task_count; throws errc::label when the
// label is out of range.
Tensor one_hot(int label, int task_count);
Tensor one_hot_batch(const std::vector<int>& labels, int task_count);

}  // namespace ssp
