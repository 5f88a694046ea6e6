#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sspnet/errors.hpp"
#include "sspnet/tensor.hpp"

namespace ssp {

// Dense 3D scalar grid, Z-major, with voxel pitch metadata in micrometers.
struct Volume {
  int64_t depth = 0, height = 0, width = 0;
  float voxel_z = 1.0f, voxel_y = 1.0f, voxel_x = 1.0f;
  std::vector<float> data;

  Volume() = default;
  Volume(int64_t d, int64_t h, int64_t w, float vz = 1.0f, float vy = 1.0f, float vx = 1.0f);

  int64_t numel() const { return depth * height * width; }
  float& at(int64_t z, int64_t y, int64_t x) { return data[(z * height + y) * width + x]; }
  float at(int64_t z, int64_t y, int64_t x) const { return data[(z * height + y) * width + x]; }

  const float* slice(int64_t z) const { return data.data() + z * height * width; }
  float* slice(int64_t z) { return data.data() + z * height * width; }

  Tensor to_tensor() const;                    // [1,1,D,H,W]
  static Volume from_tensor(const Tensor& t);  // accepts [D,H,W] / [1,1,D,H,W] etc.

  bool operator==(const Volume& o) const {
    return depth == o.depth && height == o.height && width == o.width && data == o.data;
  }
};

// Z-subsampled imaging stack: keeps slices {0, r, 2r, ...} of a dense grid.
struct SparseStack {
  Volume vol;             // depth D_i
  int ratio = 1;          // r
  int64_t dense_depth = 0;  // D_s = r * D_i
};

bool geometry_ok(int64_t d_i, int64_t d_s, int64_t r);
// Throws errc::geometry with all three values on violation.
void validate_geometry(int64_t d_i, int64_t d_s, int64_t r);

// Keeps Z slices at indices {0, r, 2r, ...}; voxel_z scales by r.
SparseStack sparsify(const Volume& dense, int r);

// (x - mean) / population std over all voxels; all-zero output when the
// volume is constant (std below 1e-8).
Volume zscore(const Volume& v);

// "VXG1" on-disk grid: magic "VXGRID01", LE header
// (u32 version=1, u32 D,H,W, f32 voxel z/y/x), payload D*H*W LE f32 Z-major.
void save_volume(const Volume& v, const std::string& path);
Volume load_volume(const std::string& path);

// ------------------------------------------------------------- dataset

struct SampleRecord {
  std::string x_path;
  std::string y_path;
  int task = 0;
  std::string split;  // train | val | test
};

struct DatasetMeta {
  int task_count = 0;
  std::vector<std::string> task_names;
  std::vector<SampleRecord> samples;
  uint64_t seed = 0;
  int ratio = 1;
  int64_t depth = 0, height = 0, width = 0;  // target-grid sample shape
};

void save_manifest(const DatasetMeta& meta, const std::string& path);
DatasetMeta load_manifest(const std::string& path);

}  // namespace ssp
