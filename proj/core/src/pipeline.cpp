#include "sspnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sspnet/rng.hpp"
#include "sspnet/run_config.hpp"

namespace ssp {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<size_t> Dataset::indices(Split s) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == s) out.push_back(i);
  return out;
}

SplitCounts split_counts(int64_t per_task) {
  check(per_task >= 1, errc::config, "need at least one sample per task");
  SplitCounts c;
  c.val = per_task / 4;                 // 25% for evaluation
  c.test = (per_task - c.val) / 10;     // 10% of the rest for test
  c.train = per_task - c.val - c.test;
  return c;
}

Split split_for_index(int64_t i, const SplitCounts& c) {
  if (i < c.train) return Split::train;
  if (i < c.train + c.val) return Split::val;
  return Split::test;
}

Dataset build_synth_dataset(uint64_t seed, int task_count, int64_t per_task, int64_t depth,
                            int64_t height, int64_t width, int r) {
  check(task_count >= 1, errc::config, "task_count must be >= 1");
  check(per_task >= 1, errc::config, "per_task must be >= 1");
  const SplitCounts counts = split_counts(per_task);
  Dataset data;
  data.task_count = task_count;
  data.ratio = r;
  for (int t = 0; t < task_count; ++t) {
    for (int64_t i = 0; i < per_task; ++i) {
      const int64_t n = static_cast<int64_t>(t) * per_task + i;
      Sample s = synth_sample(mix_seed(seed, static_cast<uint64_t>(n)), t, task_count, depth,
                              height, width, r);
      LoadedSample ls;
      ls.x = std::move(s.x);
      ls.y = zscore(s.y);
      ls.task = t;
      ls.split = split_for_index(i, counts);
      data.samples.push_back(std::move(ls));
    }
  }
  return data;
}

Dataset load_dataset(const std::string& manifest_path) {
  const DatasetMeta meta = load_manifest(manifest_path);
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  Dataset data;
  data.task_count = meta.task_count;
  data.ratio = meta.ratio;
  for (const auto& rec : meta.samples) {
    LoadedSample ls;
    Volume x = load_volume((base / rec.x_path).string());
    Volume y = load_volume((base / rec.y_path).string());
    check(y.depth == x.depth * meta.ratio, errc::geometry,
          "sample " + rec.x_path + ": target depth " + std::to_string(y.depth) +
              " != input depth * ratio");
    SparseStack st;
    st.vol = std::move(x);
    st.ratio = meta.ratio;
    st.dense_depth = y.depth;
    ls.x = std::move(st);
    ls.y = zscore(y);
    ls.task = rec.task;
    if (rec.split == "train")
      ls.split = Split::train;
    else if (rec.split == "val")
      ls.split = Split::val;
    else if (rec.split == "test")
      ls.split = Split::test;
    else
      fail(errc::config, "unknown split tag '" + rec.split + "' in manifest");
    data.samples.push_back(std::move(ls));
  }
  return data;
}

// ------------------------------------------------------------- checkpoints

namespace {

constexpr char kCkptMagic[8] = {'S', 'S', 'P', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kCkptVersion = 1;

void write_blob(std::ostream& os, const Tensor& t) {
  const uint64_t len = static_cast<uint64_t>(t.numel());
  os.write(reinterpret_cast<const char*>(&len), 8);
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(len * sizeof(float)));
}

std::vector<float> read_blob(std::istream& is, const std::string& path) {
  uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 8);
  check(is.gcount() == 8, errc::truncated, "checkpoint blob header truncated in " + path);
  std::vector<float> data(len);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(len * sizeof(float)));
  check(is.gcount() == static_cast<std::streamsize>(len * sizeof(float)), errc::truncated,
        "checkpoint blob payload truncated in " + path);
  return data;
}

}  // namespace

Checkpoint snapshot(const Model& model, const AdamState& opt, int64_t step, uint64_t rng_state,
                    double best_val_mse) {
  Checkpoint c;
  c.topo = model.config;
  c.params.reserve(model.net.params.size());
  for (const auto& p : model.net.params) c.params.push_back(p.value);
  c.buffers = model.net.buffers;
  c.opt = opt;
  c.step = step;
  c.rng_state = rng_state;
  c.best_val_mse = best_val_mse;
  return c;
}

Model restore_model(const Checkpoint& ckpt) {
  Model m;
  m.config = ckpt.topo;
  m.net = build_network(ckpt.topo, /*init_seed=*/0);
  check(m.net.params.size() == ckpt.params.size(), errc::bad_header,
        "checkpoint parameter count does not match the topology");
  check(m.net.buffers.size() == ckpt.buffers.size(), errc::bad_header,
        "checkpoint buffer count does not match the topology");
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    check(ckpt.params[i].shape() == m.net.params[i].value.shape(), errc::bad_header,
          "checkpoint parameter shape mismatch at " + m.net.params[i].name);
    m.net.params[i].value = ckpt.params[i];
  }
  for (size_t i = 0; i < ckpt.buffers.size(); ++i) m.net.buffers[i] = ckpt.buffers[i];
  return m;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), errc::io, "cannot open for writing: " + path);
  os.write(kCkptMagic, 8);
  const uint32_t version = kCkptVersion;
  os.write(reinterpret_cast<const char*>(&version), 4);

  nlohmann::json j;
  j["format"] = "SSPC1";
  j["topology"] = nlohmann::json::parse(topology_to_json_string(ckpt.topo));
  j["step"] = ckpt.step;
  j["rng_state"] = ckpt.rng_state;
  j["best_val_mse"] = ckpt.best_val_mse;
  j["adam_step"] = ckpt.opt.step;
  j["param_count"] = ckpt.params.size();
  j["buffer_count"] = ckpt.buffers.size();
  const std::string text = j.dump();
  const uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), 8);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));

  for (const auto& t : ckpt.params) write_blob(os, t);
  for (const auto& t : ckpt.buffers) write_blob(os, t);
  for (const auto& t : ckpt.opt.m) write_blob(os, t);
  for (const auto& t : ckpt.opt.v) write_blob(os, t);
  check(os.good(), errc::io, "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), errc::io, "cannot open: " + path);
  char magic[8] = {};
  is.read(magic, 8);
  check(is.gcount() == 8 && std::memcmp(magic, kCkptMagic, 8) == 0, errc::bad_header,
        "SSPC1: malformed header in " + path);
  uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  check(is.gcount() == 4, errc::truncated, "SSPC1: truncated version field in " + path);
  check(version == kCkptVersion, errc::bad_version,
        "SSPC1: unsupported version " + std::to_string(version) + " in " + path);

  uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), 8);
  check(is.gcount() == 8, errc::truncated, "SSPC1: truncated config block in " + path);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  check(is.gcount() == static_cast<std::streamsize>(len), errc::truncated,
        "SSPC1: truncated config block in " + path);

  Checkpoint c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    c.topo = topology_from_json_string(j.at("topology").dump());
    c.step = j.at("step").get<int64_t>();
    c.rng_state = j.at("rng_state").get<uint64_t>();
    c.best_val_mse = j.value("best_val_mse", 0.0);
    c.opt.step = j.at("adam_step").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(errc::bad_header, std::string("SSPC1: config block error: ") + e.what());
  }

  // Shapes come from the rebuilt network; blobs are validated against them.
  Model probe;
  probe.config = c.topo;
  probe.net = build_network(c.topo, 0);
  const uint64_t n_params = j.at("param_count").get<uint64_t>();
  const uint64_t n_buffers = j.at("buffer_count").get<uint64_t>();
  check(n_params == probe.net.params.size() && n_buffers == probe.net.buffers.size(),
        errc::bad_header, "SSPC1: registry size mismatch in " + path);

  auto read_into = [&](const Shape& shape) {
    std::vector<float> data = read_blob(is, path);
    check(static_cast<int64_t>(data.size()) == shape_numel(shape), errc::truncated,
          "SSPC1: blob length mismatch in " + path);
    return Tensor(shape, std::move(data));
  };
  for (const auto& p : probe.net.params) c.params.push_back(read_into(p.value.shape()));
  for (const auto& b : probe.net.buffers) c.buffers.push_back(read_into(b.shape()));
  for (const auto& p : probe.net.params) c.opt.m.push_back(read_into(p.value.shape()));
  for (const auto& p : probe.net.params) c.opt.v.push_back(read_into(p.value.shape()));
  return c;
}

// --------------------------------------------------------------- inference

Volume gaussian_window(std::array<int64_t, 3> shape, double sigma_scale) {
  for (int64_t e : shape) check(e >= 1, errc::contract, "gaussian_window: extents must be >= 1");
  std::array<std::vector<double>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    const int64_t n = shape[static_cast<size_t>(a)];
    const double center = static_cast<double>(n / 2);
    const double sigma = std::max(1e-12, static_cast<double>(n) * sigma_scale);
    axis[static_cast<size_t>(a)].resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      const double d = (static_cast<double>(i) - center) / sigma;
      axis[static_cast<size_t>(a)][static_cast<size_t>(i)] = std::exp(-0.5 * d * d);
    }
  }
  Volume w(shape[0], shape[1], shape[2]);
  for (int64_t z = 0; z < shape[0]; ++z)
    for (int64_t y = 0; y < shape[1]; ++y)
      for (int64_t x = 0; x < shape[2]; ++x)
        w.at(z, y, x) = static_cast<float>(
            std::max(1e-3, axis[0][static_cast<size_t>(z)] * axis[1][static_cast<size_t>(y)] *
                               axis[2][static_cast<size_t>(x)]));
  return w;
}

namespace {

std::vector<int64_t> tile_starts(int64_t extent, int64_t window, double overlap) {
  const int64_t stride = std::max<int64_t>(
      1, static_cast<int64_t>(std::llround(static_cast<double>(window) * (1.0 - overlap))));
  std::vector<int64_t> starts;
  for (int64_t s = 0; s + window < extent; s += stride) starts.push_back(s);
  starts.push_back(extent - window);
  return starts;
}

int64_t reflect_index(int64_t i, int64_t n) {
  return i < n ? i : 2 * n - 2 - i;  // reflect past the top edge
}

}  // namespace

Volume sliding_infer_tiles(const TilePredictor& predict, const Volume& input,
                           std::array<int64_t, 3> window_in, int z_expand, double overlap,
                           double sigma_scale) {
  for (int64_t e : window_in)
    check(e >= 1, errc::contract, "sliding window extents must be >= 1");
  check(z_expand >= 1, errc::contract, "z_expand must be >= 1");
  check(overlap >= 0.0 && overlap < 1.0, errc::contract, "overlap must be in [0,1)");

  // Reflect-pad inputs smaller than one window, crop the output back.
  const int64_t pd = std::max<int64_t>(0, window_in[0] - input.depth);
  const int64_t ph = std::max<int64_t>(0, window_in[1] - input.height);
  const int64_t pw = std::max<int64_t>(0, window_in[2] - input.width);
  const bool padded = pd > 0 || ph > 0 || pw > 0;
  Volume work;
  const Volume* src = &input;
  if (padded) {
    check(input.depth > 1 || pd == 0, errc::contract, "cannot reflect-pad depth 1 input");
    work = Volume(input.depth + pd, input.height + ph, input.width + pw, input.voxel_z,
                  input.voxel_y, input.voxel_x);
    for (int64_t z = 0; z < work.depth; ++z)
      for (int64_t y = 0; y < work.height; ++y)
        for (int64_t x = 0; x < work.width; ++x)
          work.at(z, y, x) = input.at(reflect_index(z, input.depth),
                                      reflect_index(y, input.height),
                                      reflect_index(x, input.width));
    src = &work;
  }

  const auto zs = tile_starts(src->depth, window_in[0], overlap);
  const auto ys = tile_starts(src->height, window_in[1], overlap);
  const auto xs = tile_starts(src->width, window_in[2], overlap);

  const std::array<int64_t, 3> wout{window_in[0] * z_expand, window_in[1], window_in[2]};
  const int64_t out_d = src->depth * z_expand;

  auto crop_tile = [&](int64_t z0, int64_t y0, int64_t x0) {
    Tensor tile({1, 1, window_in[0], window_in[1], window_in[2]});
    float* dst = tile.data();
    for (int64_t z = 0; z < window_in[0]; ++z)
      for (int64_t y = 0; y < window_in[1]; ++y) {
        const float* row = src->data.data() + ((z0 + z) * src->height + (y0 + y)) * src->width + x0;
        std::memcpy(dst, row, sizeof(float) * static_cast<size_t>(window_in[2]));
        dst += window_in[2];
      }
    return tile;
  };
  auto check_pred = [&](const Tensor& pred) {
    const Shape want{1, 1, wout[0], wout[1], wout[2]};
    check(pred.shape() == want, errc::contract,
          "tile predictor returned " + shape_str(pred.shape()) + ", expected " + shape_str(want));
  };

  // Exactly one tile and no padding: hand the direct prediction through.
  if (!padded && zs.size() == 1 && ys.size() == 1 && xs.size() == 1) {
    Tensor pred = predict(crop_tile(0, 0, 0));
    check_pred(pred);
    Volume out = Volume::from_tensor(pred);
    out.voxel_z = input.voxel_z / static_cast<float>(z_expand);
    out.voxel_y = input.voxel_y;
    out.voxel_x = input.voxel_x;
    return out;
  }

  const Volume weight = gaussian_window(wout, sigma_scale);
  std::vector<double> acc(static_cast<size_t>(out_d * src->height * src->width), 0.0);
  std::vector<double> wsum(acc.size(), 0.0);

  for (int64_t z0 : zs)
    for (int64_t y0 : ys)
      for (int64_t x0 : xs) {
        Tensor pred = predict(crop_tile(z0, y0, x0));
        check_pred(pred);
        const int64_t oz = z0 * z_expand;
        for (int64_t z = 0; z < wout[0]; ++z)
          for (int64_t y = 0; y < wout[1]; ++y) {
            const float* p = pred.data() + (z * wout[1] + y) * wout[2];
            const float* w = weight.data.data() + (z * wout[1] + y) * wout[2];
            double* a = acc.data() + ((oz + z) * src->height + (y0 + y)) * src->width + x0;
            double* s = wsum.data() + ((oz + z) * src->height + (y0 + y)) * src->width + x0;
            for (int64_t x = 0; x < wout[2]; ++x) {
              a[x] += static_cast<double>(p[x]) * static_cast<double>(w[x]);
              s[x] += static_cast<double>(w[x]);
            }
          }
      }

  Volume out(input.depth * z_expand, input.height, input.width,
             input.voxel_z / static_cast<float>(z_expand), input.voxel_y, input.voxel_x);
  for (int64_t z = 0; z < out.depth; ++z)
    for (int64_t y = 0; y < out.height; ++y)
      for (int64_t x = 0; x < out.width; ++x) {
        const size_t i = static_cast<size_t>((z * src->height + y) * src->width + x);
        out.at(z, y, x) = static_cast<float>(acc[i] / wsum[i]);
      }
  return out;
}

Volume predict_volume(const Model& model, const SparseStack& x, int task,
                      std::array<int64_t, 3> window, double overlap, double sigma_scale) {
  const TopologyConfig& cfg = model.config;
  check(!model.net.training, errc::contract, "predict_volume requires an eval-mode network");
  check(x.ratio == cfg.ratio, errc::geometry,
        "stack ratio " + std::to_string(x.ratio) + " does not match model ratio " +
            std::to_string(cfg.ratio));
  validate_geometry(x.vol.depth, x.dense_depth, x.ratio);
  if (window == std::array<int64_t, 3>{0, 0, 0})
    window = {cfg.patch_z, cfg.patch_h, cfg.patch_w};

  Tensor code = one_hot(task, cfg.task_count).reshaped({1, cfg.task_count});
  TilePredictor tile_fn = [&](const Tensor& tile) { return model.net.forward(tile, code); };

  if (cfg.interp == InterpKind::prefix) {
    const Volume pseudo = prefix_upsample(x, cfg.interp_mode);
    return sliding_infer_tiles(tile_fn, pseudo, window, 1, overlap, sigma_scale);
  }
  check(window[0] % cfg.ratio == 0, errc::config,
        "window depth must be divisible by the sparsity ratio for postfix/none models");
  const std::array<int64_t, 3> window_in{window[0] / cfg.ratio, window[1], window[2]};
  return sliding_infer_tiles(tile_fn, x.vol, window_in, cfg.ratio, overlap, sigma_scale);
}

// ---------------------------------------------------------------- training

namespace {

// Crop + optional flips from a volume into a [dz,dy,dx] block of dst.
void copy_crop(const Volume& src, int64_t z0, int64_t y0, int64_t x0, int64_t dz, int64_t dy,
               int64_t dx, bool flip_y, bool flip_x, float* dst) {
  for (int64_t z = 0; z < dz; ++z)
    for (int64_t y = 0; y < dy; ++y) {
      const int64_t sy = flip_y ? y0 + dy - 1 - y : y0 + y;
      const float* row = src.data.data() + ((z0 + z) * src.height + sy) * src.width;
      float* out = dst + (z * dy + y) * dx;
      if (!flip_x) {
        std::memcpy(out, row + x0, sizeof(float) * static_cast<size_t>(dx));
      } else {
        for (int64_t x = 0; x < dx; ++x) out[x] = row[x0 + dx - 1 - x];
      }
    }
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const TopologyConfig& topo, const Dataset& data,
                  const Checkpoint* resume_from) {
  validate_topology(topo);
  check(cfg.batch_size >= 1, errc::config, "batch_size must be >= 1");
  check(data.task_count <= topo.task_count, errc::config,
        "dataset has " + std::to_string(data.task_count) + " tasks but the topology embeds " +
            std::to_string(topo.task_count));
  check(data.ratio == topo.ratio, errc::config,
        "dataset ratio " + std::to_string(data.ratio) + " does not match topology ratio " +
            std::to_string(topo.ratio));
  const auto train_idx = data.indices(Split::train);
  const auto val_idx = data.indices(Split::val);
  check(!train_idx.empty(), errc::config, "dataset has no training samples");

  for (const auto& s : data.samples) {
    validate_geometry(s.x.vol.depth, s.x.dense_depth, s.x.ratio);
    check(s.y.depth >= topo.patch_z && s.y.height >= topo.patch_h && s.y.width >= topo.patch_w,
          errc::config, "sample smaller than the training patch");
  }

  Model model;
  AdamState opt;
  Rng rng;
  int64_t start_step = 0;
  if (resume_from) {
    check(resume_from->topo == topo, errc::config,
          "resume checkpoint topology does not match the requested topology");
    model = restore_model(*resume_from);
    opt = resume_from->opt;
    rng.state = resume_from->rng_state;
    start_step = resume_from->step;
  } else {
    model.config = topo;
    model.net = build_network(topo, mix_seed(cfg.seed, 0x1217ull));
    opt = AdamState::init(model.net.params);
    rng.state = mix_seed(cfg.seed, 0x5a31ull);
  }

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  // Prefix models consume the pseudo grid; cache it per sample.
  const bool prefix = topo.interp == InterpKind::prefix;
  std::vector<Volume> net_inputs;
  net_inputs.reserve(data.samples.size());
  for (const auto& s : data.samples)
    net_inputs.push_back(prefix ? prefix_upsample(s.x, topo.interp_mode) : s.x.vol);

  const int64_t pz = topo.patch_z, phh = topo.patch_h, pww = topo.patch_w;
  const int64_t in_z = topo.net_input_depth();
  const int r = topo.ratio;
  const int64_t b = cfg.batch_size;

  auto run_eval = [&](int64_t step, double mean_loss) {
    model.net.training = false;
    std::vector<MetricTriple> per_volume;
    std::vector<int> tasks;
    for (size_t idx : val_idx) {
      const auto& s = data.samples[idx];
      Volume pred = predict_volume(model, s.x, s.task);
      per_volume.push_back(eval_metrics(pred, s.y));
      tasks.push_back(s.task);
    }
    EvalRecord rec;
    rec.step = step;
    rec.train_loss = mean_loss;
    if (!per_volume.empty()) {
      TaskedMetrics agg = aggregate_by_task(per_volume, tasks, data.task_count);
      rec.val = agg.overall;
      rec.per_task = agg.per_task;
    }
    return rec;
  };

  TrainResult result;
  double best_mse = resume_from ? resume_from->best_val_mse : 0.0;
  bool have_best = false;
  if (resume_from && resume_from->best_val_mse > 0.0) have_best = true;

  if (cfg.steps == 0) {
    result.best = snapshot(model, opt, start_step, rng.state, 0.0);
    result.final = result.best;
    return result;
  }

  double loss_acc = 0.0;
  int64_t loss_count = 0;
  Tensor input({b, 1, in_z, phh, pww});
  Tensor target({b, 1, pz, phh, pww});
  std::vector<int> labels(static_cast<size_t>(b));

  for (int64_t step = start_step + 1; step <= start_step + cfg.steps; ++step) {
    // assemble the batch
    model.net.training = true;
    for (int64_t k = 0; k < b; ++k) {
      const size_t idx = train_idx[rng.next_below(train_idx.size())];
      const auto& s = data.samples[idx];
      int64_t z0 = 0, y0 = 0, x0 = 0;
      bool fy = false, fx = false;
      if (cfg.augment) {
        const int64_t zsteps = (s.y.depth - pz) / r + 1;
        z0 = r * static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(zsteps)));
        y0 = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(s.y.height - phh + 1)));
        x0 = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(s.y.width - pww + 1)));
        fy = rng.coin();
        fx = rng.coin();
      }
      const Volume& nin = net_inputs[idx];
      const int64_t in_z0 = prefix ? z0 : z0 / r;
      copy_crop(nin, in_z0, y0, x0, in_z, phh, pww, fy, fx,
                input.data() + k * in_z * phh * pww);
      copy_crop(s.y, z0, y0, x0, pz, phh, pww, fy, fx, target.data() + k * pz * phh * pww);
      labels[static_cast<size_t>(k)] = s.task;
    }
    Tensor code = one_hot_batch(labels, topo.task_count);

    Network::Trace trace;
    Tensor out = model.net.forward_trace(input, code, trace);
    Tensor grad;
    const float loss = mse_loss(out, target, &grad);
    check(std::isfinite(loss), errc::numeric,
          "training aborted: non-finite loss at step " + std::to_string(step));
    model.net.zero_grad();
    model.net.backward(trace, grad);
    adam_step(model.net.params, opt, adam_cfg);

    loss_acc += loss;
    loss_count += 1;

    const bool last = step == start_step + cfg.steps;
    if (step % cfg.eval_interval == 0 || last) {
      EvalRecord rec = run_eval(step, loss_acc / static_cast<double>(loss_count));
      loss_acc = 0.0;
      loss_count = 0;
      result.log.push_back(rec);
      if (!val_idx.empty() && (!have_best || rec.val.mse < best_mse)) {
        best_mse = rec.val.mse;
        have_best = true;
        result.best = snapshot(model, opt, step, rng.state, best_mse);
      }
      result.steps_run = step - start_step;
      if (cfg.stop_at_r2 && !val_idx.empty() && rec.val.r2_defined &&
          rec.val.r2 >= *cfg.stop_at_r2)
        break;
    }
  }

  model.net.training = false;
  result.final = snapshot(model, opt, start_step + result.steps_run, rng.state, best_mse);
  if (!have_best) result.best = result.final;
  return result;
}

}  // namespace ssp
