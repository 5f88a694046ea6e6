#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sspnet/adam.hpp"
#include "sspnet/metrics.hpp"
#include "sspnet/synth.hpp"
#include "sspnet/topology.hpp"
#include "sspnet/volume.hpp"

namespace ssp {

struct Model {
  TopologyConfig config;
  Network net;
};

// ----------------------------------------------------------------- dataset

enum class Split { train, val, test };
const char* split_name(Split s);

struct LoadedSample {
  SparseStack x;  // z-scored TL stack at imaging depth
  Volume y;       // z-scored fluorescence target at dense depth
  int task = 0;
  Split split = Split::train;
};

struct Dataset {
  int task_count = 0;
  int ratio = 1;
  std::vector<LoadedSample> samples;

  std::vector<size_t> indices(Split s) const;
};

// Split sizes per task: 25% of all samples for validation, 10% of the
// remainder for test (floored), the rest trains. Assignment by index:
// first train, then val, then test.
struct SplitCounts {
  int64_t train = 0, val = 0, test = 0;
};
SplitCounts split_counts(int64_t per_task);
Split split_for_index(int64_t i, const SplitCounts& c);

// Deterministic in-memory dataset; sample n (global index) uses seed
// mix_seed(seed, n). cmd_synth writes exactly these volumes to disk.
Dataset build_synth_dataset(uint64_t seed, int task_count, int64_t per_task, int64_t depth,
                            int64_t height, int64_t width, int r);

// Loads every volume referenced by a manifest (paths resolved against the
// manifest's directory) and z-scores the targets.
Dataset load_dataset(const std::string& manifest_path);

// ------------------------------------------------------------- checkpoints

struct Checkpoint {
  uint32_t version = 1;
  TopologyConfig topo;
  std::vector<Tensor> params;   // registry order
  std::vector<Tensor> buffers;  // running stats, registry order
  AdamState opt;
  int64_t step = 0;
  uint64_t rng_state = 0;
  double best_val_mse = 0.0;
};

Checkpoint snapshot(const Model& model, const AdamState& opt, int64_t step, uint64_t rng_state,
                    double best_val_mse);
Model restore_model(const Checkpoint& ckpt);

// "SSPC1" container: magic, u32 version, length-prefixed JSON config block,
// then length-prefixed little-endian f32 blobs in registry order (params,
// buffers, Adam moments).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// ---------------------------------------------------------------- training

struct TrainConfig {
  int64_t steps = 2000;
  int batch_size = 8;
  double lr = 1e-4;
  int64_t eval_interval = 200;
  uint64_t seed = 0;
  std::optional<double> stop_at_r2;  // stop early once validation R^2 reaches this
  bool augment = true;               // random crop + H/W flips
};

struct EvalRecord {
  int64_t step = 0;
  double train_loss = 0.0;
  MetricTriple val;
  std::vector<MetricTriple> per_task;
};

struct TrainResult {
  Checkpoint best;   // lowest validation MSE seen at an eval point
  Checkpoint final;  // state when training stopped (resume from here)
  std::vector<EvalRecord> log;
  int64_t steps_run = 0;
};

// Minibatch Adam on MSE over random training patches; validation via
// Gaussian sliding inference over full volumes at every eval interval.
// Returns the checkpoint with the best validation MSE.
TrainResult train(const TrainConfig& cfg, const TopologyConfig& topo, const Dataset& data,
                  const Checkpoint* resume_from = nullptr);

// --------------------------------------------------------------- inference

// Separable Gaussian importance window: peak 1 at the center voxel
// (floor(extent/2) per axis), sigma = extent * sigma_scale, floor-clamped
// at 1e-3.
Volume gaussian_window(std::array<int64_t, 3> shape, double sigma_scale = 0.125);

// Tile predictor contract: input [1,1,wz,wh,ww] -> output
// [1,1,wz*z_expand,wh,ww].
using TilePredictor = std::function<Tensor(const Tensor&)>;

// Tiles the input with stride window*(1-overlap), blends tile predictions
// with the Gaussian window, normalizes by the accumulated weight. A volume
// that is exactly one window returns the direct prediction bit-for-bit.
// Smaller volumes are reflect-padded up to the window and cropped back.
Volume sliding_infer_tiles(const TilePredictor& predict, const Volume& input,
                           std::array<int64_t, 3> window_in, int z_expand, double overlap = 0.5,
                           double sigma_scale = 0.125);

// Full wiring for a trained model: prefix interpolation turns the stack into
// the pseudo grid before tiling; postfix/none models consume the raw stack
// and emit dense tiles themselves.
Volume predict_volume(const Model& model, const SparseStack& x, int task,
                      std::array<int64_t, 3> window = {0, 0, 0}, double overlap = 0.5,
                      double sigma_scale = 0.125);

}  // namespace ssp
