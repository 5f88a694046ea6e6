#pragma once

#include <cstdint>

#include "sspnet/volume.hpp"

namespace ssp {

// One labeled pair: z-scored transmitted-light stack (sparse in Z) plus the
// fluorescence target for a single structure family.
struct Sample {
  SparseStack x;
  Volume y;
  int task = 0;
};

constexpr int kMaxSynthTasks = 12;

// Deterministic in (seed, task, task_count, shape, r). The target renders
// one family of primitives per task (spheres / shells / tube walks, cycling
// with parameter shifts past task 2); the input mixes every family's
// structures, blurred, with a Z illumination gradient and voxel noise, so
// the task label carries real information.
Sample synth_sample(uint64_t seed, int task, int task_count, int64_t depth, int64_t height,
                    int64_t width, int r);

// Separable Gaussian blur with edge replication (shared with the tests).
Volume gaussian_blur(const Volume& v, double sigma);

}  // namespace ssp
