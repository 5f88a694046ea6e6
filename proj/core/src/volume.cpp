#include "sspnet/volume.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ssp {

static_assert(std::endian::native == std::endian::little,
              "VXG1 I/O assumes a little-endian host");

Volume::Volume(int64_t d, int64_t h, int64_t w, float vz, float vy, float vx)
    : depth(d), height(h), width(w), voxel_z(vz), voxel_y(vy), voxel_x(vx) {
  check(d >= 1 && h >= 1 && w >= 1, errc::contract,
        "volume extents must be >= 1, got " + std::to_string(d) + "x" + std::to_string(h) + "x" +
            std::to_string(w));
  check(vz > 0 && vy > 0 && vx > 0, errc::contract, "voxel sizes must be positive");
  data.assign(static_cast<size_t>(d * h * w), 0.0f);
}

Tensor Volume::to_tensor() const {
  return Tensor({1, 1, depth, height, width}, data);
}

Volume Volume::from_tensor(const Tensor& t) {
  check(t.rank() >= 3, errc::contract, "volume tensor must have at least 3 axes");
  for (int i = 0; i + 3 < t.rank(); ++i)
    check(t.dim(i) == 1, errc::contract,
          "volume tensor leading axes must be 1, got " + shape_str(t.shape()));
  const int r = t.rank();
  Volume v(t.dim(r - 3), t.dim(r - 2), t.dim(r - 1));
  v.data = t.vec();
  return v;
}

bool geometry_ok(int64_t d_i, int64_t d_s, int64_t r) {
  return d_i > 0 && d_s > 0 && r > 0 && r * d_i == d_s;
}

void validate_geometry(int64_t d_i, int64_t d_s, int64_t r) {
  check(geometry_ok(d_i, d_s, r), errc::geometry,
        "sparse-view geometry violated: r*D_i != D_s (D_i=" + std::to_string(d_i) +
            ", D_s=" + std::to_string(d_s) + ", r=" + std::to_string(r) + ")");
}

SparseStack sparsify(const Volume& dense, int r) {
  check(r >= 1, errc::geometry, "sparsity ratio must be >= 1, got " + std::to_string(r));
  check(dense.depth % r == 0, errc::geometry,
        "dense depth " + std::to_string(dense.depth) + " is not divisible by r=" +
            std::to_string(r));
  SparseStack s;
  s.ratio = r;
  s.dense_depth = dense.depth;
  s.vol = Volume(dense.depth / r, dense.height, dense.width, dense.voxel_z * static_cast<float>(r),
                 dense.voxel_y, dense.voxel_x);
  const size_t plane = static_cast<size_t>(dense.height * dense.width);
  for (int64_t j = 0; j < s.vol.depth; ++j)
    std::memcpy(s.vol.slice(j), dense.slice(j * r), plane * sizeof(float));
  return s;
}

Volume zscore(const Volume& v) {
  const int64_t n = v.numel();
  double sum = 0;
  for (float f : v.data) sum += f;
  const double mean = sum / static_cast<double>(n);
  double sq = 0;
  for (float f : v.data) {
    const double d = f - mean;
    sq += d * d;
  }
  const double stddev = std::sqrt(sq / static_cast<double>(n));
  Volume out(v.depth, v.height, v.width, v.voxel_z, v.voxel_y, v.voxel_x);
  if (stddev < 1e-8) return out;  // constant volume -> all zeros
  const double inv = 1.0 / stddev;
  for (int64_t i = 0; i < n; ++i)
    out.data[static_cast<size_t>(i)] =
        static_cast<float>((v.data[static_cast<size_t>(i)] - mean) * inv);
  return out;
}

// ------------------------------------------------------------------- VXG1

namespace {

constexpr char kMagic[8] = {'V', 'X', 'G', 'R', 'I', 'D', '0', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_f32(std::ostream& os, float v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  check(is.good(), errc::bad_header, "VXG1: header ends prematurely");
  return v;
}

float read_f32(std::istream& is) {
  float v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  check(is.good(), errc::bad_header, "VXG1: header ends prematurely");
  return v;
}

}  // namespace

void save_volume(const Volume& v, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), errc::io, "cannot open for writing: " + path);
  os.write(kMagic, 8);
  write_u32(os, kVersion);
  write_u32(os, static_cast<uint32_t>(v.depth));
  write_u32(os, static_cast<uint32_t>(v.height));
  write_u32(os, static_cast<uint32_t>(v.width));
  write_f32(os, v.voxel_z);
  write_f32(os, v.voxel_y);
  write_f32(os, v.voxel_x);
  os.write(reinterpret_cast<const char*>(v.data.data()),
           static_cast<std::streamsize>(v.data.size() * sizeof(float)));
  check(os.good(), errc::io, "write failed: " + path);
}

Volume load_volume(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), errc::io, "cannot open: " + path);
  char magic[8] = {};
  is.read(magic, 8);
  check(is.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0, errc::bad_header,
        "VXG1: malformed header in " + path);
  const uint32_t version = read_u32(is);
  check(version == kVersion, errc::bad_version,
        "VXG1: unsupported version " + std::to_string(version) + " in " + path);
  const uint32_t d = read_u32(is), h = read_u32(is), w = read_u32(is);
  const float vz = read_f32(is), vy = read_f32(is), vx = read_f32(is);
  check(d >= 1 && h >= 1 && w >= 1, errc::bad_header, "VXG1: zero extent in " + path);
  check(vz > 0 && vy > 0 && vx > 0, errc::bad_header, "VXG1: non-positive voxel size in " + path);
  Volume v(d, h, w, vz, vy, vx);
  is.read(reinterpret_cast<char*>(v.data.data()),
          static_cast<std::streamsize>(v.data.size() * sizeof(float)));
  check(is.gcount() == static_cast<std::streamsize>(v.data.size() * sizeof(float)),
        errc::truncated, "VXG1: truncated payload in " + path);
  return v;
}

// --------------------------------------------------------------- manifest

void save_manifest(const DatasetMeta& meta, const std::string& path) {
  nlohmann::json j;
  j["format"] = "ssp-dataset";
  j["task_count"] = meta.task_count;
  j["task_names"] = meta.task_names;
  j["seed"] = meta.seed;
  j["ratio"] = meta.ratio;
  j["shape"] = {meta.depth, meta.height, meta.width};
  auto& arr = j["samples"] = nlohmann::json::array();
  for (const auto& s : meta.samples)
    arr.push_back({{"x", s.x_path}, {"y", s.y_path}, {"task", s.task}, {"split", s.split}});
  std::ofstream os(path);
  check(os.good(), errc::io, "cannot open for writing: " + path);
  os << j.dump(2) << "\n";
  check(os.good(), errc::io, "write failed: " + path);
}

DatasetMeta load_manifest(const std::string& path) {
  std::ifstream is(path);
  check(is.good(), errc::io, "cannot open: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::bad_header, "manifest parse error in " + path + ": " + e.what());
  }
  DatasetMeta meta;
  try {
    meta.task_count = j.at("task_count").get<int>();
    if (j.contains("task_names")) meta.task_names = j["task_names"].get<std::vector<std::string>>();
    meta.seed = j.at("seed").get<uint64_t>();
    meta.ratio = j.value("ratio", 1);
    if (j.contains("shape")) {
      meta.depth = j["shape"].at(0).get<int64_t>();
      meta.height = j["shape"].at(1).get<int64_t>();
      meta.width = j["shape"].at(2).get<int64_t>();
    }
    for (const auto& s : j.at("samples")) {
      SampleRecord rec;
      rec.x_path = s.at("x").get<std::string>();
      rec.y_path = s.at("y").get<std::string>();
      rec.task = s.at("task").get<int>();
      rec.split = s.at("split").get<std::string>();
      meta.samples.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(errc::bad_header, "manifest field error in " + path + ": " + e.what());
  }
  for (const auto& s : meta.samples)
    check(s.task >= 0 && s.task < meta.task_count, errc::label,
          "manifest sample task " + std::to_string(s.task) + " out of range [0," +
              std::to_string(meta.task_count) + ")");
  return meta;
}

}  // namespace ssp
