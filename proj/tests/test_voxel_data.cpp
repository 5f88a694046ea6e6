#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "sspnet/synth.hpp"
#include "sspnet/volume.hpp"

using namespace ssp;
using namespace ssp::testing;
namespace fs = std::filesystem;

namespace {

Volume rand_volume(int64_t d, int64_t h, int64_t w, uint64_t seed) {
  Volume v(d, h, w, 0.29f, 0.29f, 0.29f);
  Rng rng(seed);
  for (auto& f : v.data) f = static_cast<float>(rng.normal());
  return v;
}

struct TempDir {
  fs::path path;
  TempDir() {
    Rng rng(static_cast<uint64_t>(
        std::chrono::steady_clock::now().time_since_epoch().count()));
    path = fs::temp_directory_path() / ("sspnet_test_" + std::to_string(rng.next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE_BEGIN("voxel-data");

TEST_CASE("sparse-view geometry rule r * D_i = D_s") {
  CHECK(geometry_ok(16, 32, 2));
  CHECK(geometry_ok(32, 32, 1));  // dense view
  CHECK_FALSE(geometry_ok(5, 32, 8));
  CHECK_NOTHROW(validate_geometry(16, 32, 2));
  CHECK_THROWS_WITH_AS(validate_geometry(5, 32, 8), doctest::Contains("D_i=5"), error);
  try {
    validate_geometry(5, 32, 8);
  } catch (const error& e) {
    CHECK(e.code() == errc::geometry);
    CHECK(std::string(e.what()).find("D_s=32") != std::string::npos);
    CHECK(std::string(e.what()).find("r=8") != std::string::npos);
  }
}

TEST_CASE("sparsify keeps slices {0, r, 2r, ...}") {
  Volume v = rand_volume(8, 4, 4, 1);
  SparseStack s = sparsify(v, 2);
  CHECK(s.vol.depth == 4);
  CHECK(s.dense_depth == 8);
  CHECK(s.ratio == 2);
  CHECK(s.vol.voxel_z == doctest::Approx(0.58f));
  for (int64_t j = 0; j < 4; ++j)
    for (int64_t i = 0; i < 16; ++i) CHECK(s.vol.slice(j)[i] == v.slice(2 * j)[i]);

  // r = 1 is the identity
  SparseStack dense = sparsify(v, 1);
  CHECK(dense.vol == v);

  // r = 8 on a 32-deep grid: 4 slices left, an 87.5% reduction
  Volume big = rand_volume(32, 4, 4, 2);
  SparseStack s8 = sparsify(big, 8);
  CHECK(s8.vol.depth == 4);
  CHECK(1.0 - static_cast<double>(s8.vol.depth) / static_cast<double>(big.depth) ==
        doctest::Approx(0.875));

  CHECK_THROWS_AS((void)sparsify(rand_volume(5, 4, 4, 3), 2), error);
}

TEST_CASE("zscore normalizes to zero mean unit variance") {
  Volume c(4, 4, 4);
  for (auto& f : c.data) f = 3.25f;
  Volume zc = zscore(c);
  for (float f : zc.data) CHECK(f == 0.0f);  // constant volume -> all zeros

  Volume v = rand_volume(4, 8, 8, 4);
  for (auto& f : v.data) f = f * 2.3f + 0.7f;
  Volume z = zscore(v);
  double mean = 0;
  for (float f : z.data) mean += f;
  mean /= static_cast<double>(z.numel());
  double var = 0;
  for (float f : z.data) var += (f - mean) * (f - mean);
  var /= static_cast<double>(z.numel());
  CHECK(std::abs(mean) < 1e-5);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-5);

  // two-voxel volume [1,3] -> [-1,1] (population std = 1)
  Volume two(1, 1, 2);
  two.data = {1.0f, 3.0f};
  Volume zt = zscore(two);
  CHECK(zt.data[0] == doctest::Approx(-1.0f));
  CHECK(zt.data[1] == doctest::Approx(1.0f));

  // idempotent up to 1e-5
  Volume zz = zscore(z);
  double dmax = 0;
  for (size_t i = 0; i < z.data.size(); ++i)
    dmax = std::max(dmax, std::abs(static_cast<double>(zz.data[i]) - z.data[i]));
  CHECK(dmax < 1e-5);
}

TEST_CASE("synth_sample determinism and structure statistics") {
  Sample a = synth_sample(123, 0, 3, 16, 64, 64, 2);
  Sample b = synth_sample(123, 0, 3, 16, 64, 64, 2);
  CHECK(a.y.data == b.y.data);
  CHECK(a.x.vol.data == b.x.vol.data);
  CHECK(a.x.vol.depth == 8);
  CHECK(a.y.depth == 16);

  // fraction of bright voxels stays in a sane band
  for (uint64_t seed : {123u, 321u, 777u})
    for (int task : {0, 1, 2}) {
      Sample s = synth_sample(seed, task, 3, 16, 64, 64, 2);
      int64_t bright = 0;
      for (float f : s.y.data) bright += f > 0.5f;
      const double frac = static_cast<double>(bright) / static_cast<double>(s.y.numel());
      CAPTURE(seed);
      CAPTURE(task);
      CHECK(frac > 0.001);
      CHECK(frac < 0.5);
    }

  // different tasks render different structures at the same seed
  Sample t0 = synth_sample(55, 0, 3, 16, 64, 64, 2);
  Sample t1 = synth_sample(55, 1, 3, 16, 64, 64, 2);
  CHECK(t0.y.data != t1.y.data);

  // changing only r changes x (depth D/r) but leaves y bit-identical
  Sample r2 = synth_sample(99, 2, 3, 16, 64, 64, 2);
  Sample r4 = synth_sample(99, 2, 3, 16, 64, 64, 4);
  CHECK(r2.y.data == r4.y.data);
  CHECK(r2.x.vol.depth == 8);
  CHECK(r4.x.vol.depth == 4);
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 64 * 64; ++j)
      CHECK(r4.x.vol.slice(i)[j] == r2.x.vol.slice(2 * i)[j]);

  CHECK_THROWS_AS((void)synth_sample(1, 5, 3, 16, 64, 64, 2), error);
  try {
    (void)synth_sample(1, 5, 3, 16, 64, 64, 2);
  } catch (const error& e) {
    CHECK(e.code() == errc::label);
  }
}

TEST_CASE("tasks beyond the first three cycle with parameter shifts") {
  Sample t0 = synth_sample(7, 0, 12, 16, 32, 32, 1);
  Sample t3 = synth_sample(7, 3, 12, 16, 32, 32, 1);
  CHECK(t0.y.data != t3.y.data);  // same family, shifted parameters
  CHECK_THROWS_AS((void)synth_sample(7, 0, 13, 16, 32, 32, 1), error);
}

TEST_CASE("VXG1 round-trip is bit-exact") {
  TempDir tmp;
  const std::string path = (tmp.path / "vol.vxg").string();
  Volume v = rand_volume(6, 5, 7, 10);
  v.voxel_z = 0.58f;
  save_volume(v, path);
  Volume r = load_volume(path);
  CHECK(r.depth == 6);
  CHECK(r.height == 5);
  CHECK(r.width == 7);
  CHECK(r.voxel_z == v.voxel_z);
  CHECK(r.voxel_y == v.voxel_y);
  CHECK(r.data == v.data);
}

TEST_CASE("VXG1 rejects malformed, truncated and future files distinctly") {
  TempDir tmp;
  const std::string path = (tmp.path / "vol.vxg").string();
  Volume v = rand_volume(4, 4, 4, 11);
  save_volume(v, path);

  auto clobber = [&](int64_t offset, char byte) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(offset);
    f.write(&byte, 1);
  };

  // magic bytes
  clobber(0, 'Z');
  try {
    (void)load_volume(path);
    FAIL("expected malformed header");
  } catch (const error& e) {
    CHECK(e.code() == errc::bad_header);
  }

  // version field
  save_volume(v, path);
  clobber(8, 9);
  try {
    (void)load_volume(path);
    FAIL("expected version error");
  } catch (const error& e) {
    CHECK(e.code() == errc::bad_version);
  }

  // truncated payload (one byte short)
  save_volume(v, path);
  fs::resize_file(path, fs::file_size(path) - 1);
  try {
    (void)load_volume(path);
    FAIL("expected truncation error");
  } catch (const error& e) {
    CHECK(e.code() == errc::truncated);
  }

  CHECK_THROWS_AS((void)load_volume((tmp.path / "missing.vxg").string()), error);
}

TEST_CASE("manifest round-trip and label validation") {
  TempDir tmp;
  const std::string path = (tmp.path / "manifest.json").string();
  DatasetMeta meta;
  meta.task_count = 3;
  meta.task_names = {"spheres", "shells", "tubes"};
  meta.seed = 42;
  meta.ratio = 2;
  meta.depth = 16;
  meta.height = 64;
  meta.width = 64;
  meta.samples.push_back({"x0.vxg", "y0.vxg", 0, "train"});
  meta.samples.push_back({"x1.vxg", "y1.vxg", 2, "val"});
  save_manifest(meta, path);
  DatasetMeta r = load_manifest(path);
  CHECK(r.task_count == 3);
  CHECK(r.samples.size() == 2);
  CHECK(r.samples[1].task == 2);
  CHECK(r.samples[1].split == "val");
  CHECK(r.seed == 42);
  CHECK(r.ratio == 2);

  meta.samples.push_back({"x2.vxg", "y2.vxg", 7, "train"});
  save_manifest(meta, path);
  try {
    (void)load_manifest(path);
    FAIL("expected label error");
  } catch (const error& e) {
    CHECK(e.code() == errc::label);
  }
}

TEST_SUITE_END();
