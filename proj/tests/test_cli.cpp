// Drives the installed command-line binary end to end through a shell.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sspnet/rng.hpp"
#include "sspnet/volume.hpp"

using namespace ssp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunOutcome {
  int exit_code = -1;
  std::string out;
};

RunOutcome run_cli(const std::string& args) {
  const std::string cmd = std::string(SSPNET_CLI_PATH) + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  RunOutcome r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (size_t n = fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    Rng rng(static_cast<uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
    path = fs::temp_directory_path() / ("sspnet_cli_" + std::to_string(rng.next_u64()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const { return (path / sub).string(); }
};

std::string file_text(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
}

// tiny but trainable config against a synthesized dataset
std::string tiny_run_config(const std::string& manifest, const std::string& out, int steps) {
  json j;
  j["topology"] = {{"kind", "hybrid_3to2d"},
                   {"encoder_channels", {4, 8, 8, 8, 8}},
                   {"u_dim", 16},
                   {"patch", {16, 16, 16}},
                   {"interp", "prefix"},
                   {"interp_mode", "nearest"},
                   {"projection_space", "embed3d"},
                   {"task_count", 2},
                   {"ratio", 2}};
  j["train"] = {{"steps", steps}, {"batch_size", 2}, {"learning_rate", 1e-3},
                {"eval_interval", 2}, {"seed", 11}};
  j["data"] = {{"manifest", manifest}};
  j["out"] = out;
  return j.dump(2);
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("synth is deterministic and split counts follow the 25%/10% rule") {
  TempDir tmp;
  const std::string args =
      " --seed 7 --tasks 3 --per-task 20 --shape 16 16 16 --ratio 2 --threads 2 --out ";
  auto r1 = run_cli("synth" + args + tmp.str("a"));
  CHECK(r1.exit_code == 0);
  auto r2 = run_cli("synth" + args + tmp.str("b"));
  CHECK(r2.exit_code == 0);

  // identical manifests and bit-identical volume files
  CHECK(file_text(tmp.str("a/manifest.json")) == file_text(tmp.str("b/manifest.json")));
  for (const char* f : {"x_0000.vxg", "y_0000.vxg", "x_0059.vxg", "y_0059.vxg"})
    CHECK(file_text(tmp.str("a/") + f) == file_text(tmp.str("b/") + f));

  DatasetMeta meta = load_manifest(tmp.str("a/manifest.json"));
  CHECK(meta.samples.size() == 60);
  int train = 0, val = 0, test = 0;
  for (const auto& s : meta.samples) {
    if (s.split == "train") ++train;
    if (s.split == "val") ++val;
    if (s.split == "test") ++test;
  }
  CHECK(train == 42);  // 14 per task
  CHECK(val == 15);    // 5 per task
  CHECK(test == 3);    // 1 per task

  // non-empty out dir without --force is refused
  auto r3 = run_cli("synth" + args + tmp.str("a"));
  CHECK(r3.exit_code == 6);
  CHECK(r3.out.find("--force") != std::string::npos);
  auto r4 = run_cli("synth" + args + tmp.str("a") + " --force");
  CHECK(r4.exit_code == 0);
}

TEST_CASE("synth argument validation") {
  TempDir tmp;
  auto r = run_cli("synth --seed 1 --tasks 0 --per-task 4 --shape 16 16 16 --ratio 2 --out " +
                   tmp.str("z"));
  CHECK(r.exit_code == 2);
  auto r2 = run_cli("synth --seed 1 --tasks 2 --per-task 4 --shape 15 16 16 --ratio 2 --out " +
                    tmp.str("z2"));
  CHECK(r2.exit_code == 3);  // 15 not divisible by 2
}

TEST_CASE("profile reports strictly increasing MACs over the four topologies") {
  TempDir tmp;
  int64_t last = -1;
  for (const char* kind : {"pure2d", "hybrid_2to3d", "hybrid_3to2d", "pure3d"}) {
    auto r = run_cli(std::string("profile --kind ") + kind + " --json --threads 2 --out " +
                     tmp.str(std::string(kind) + ".json"));
    REQUIRE(r.exit_code == 0);
    json j = json::parse(file_text(tmp.str(std::string(kind) + ".json")));
    const int64_t macs = j["total_macs"].get<int64_t>();
    CHECK(macs > last);
    last = macs;
  }
}

TEST_CASE("train -> eval -> infer round trip on a tiny dataset") {
  TempDir tmp;
  auto rs = run_cli(
      "synth --seed 3 --tasks 2 --per-task 6 --shape 16 16 16 --ratio 2 --threads 2 --out " +
      tmp.str("data"));
  REQUIRE(rs.exit_code == 0);

  write_text(tmp.str("run.json"), tiny_run_config("data/manifest.json", tmp.str("run_out"), 4));
  auto rt = run_cli("train --config " + tmp.str("run.json") + " --threads 2");
  REQUIRE(rt.exit_code == 0);
  CHECK(fs::exists(tmp.str("run_out/best.sspc")));
  CHECK(fs::exists(tmp.str("run_out/final.sspc")));
  CHECK(fs::exists(tmp.str("run_out/resolved.json")));

  // metric log: one JSON object per eval line
  std::ifstream log(tmp.str("run_out/metrics.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    json j = json::parse(line);
    CHECK(j.contains("step"));
    CHECK(j.contains("mse"));
    CHECK(j.contains("per_task"));
    ++lines;
  }
  CHECK(lines == 2);  // eval every 2 steps, 4 steps total

  auto re = run_cli("eval --checkpoint " + tmp.str("run_out/best.sspc") + " --manifest " +
                    tmp.str("data/manifest.json") + " --split val --threads 2");
  REQUIRE(re.exit_code == 0);
  json report = json::parse(re.out);
  CHECK(report["volumes"].get<int>() == 2);
  CHECK(report["overall"].contains("mse"));

  // untrained-ish model: far from the oracle on the val set
  CHECK(report["overall"]["r2"].get<double>() <= 0.1);

  auto ri = run_cli("infer --checkpoint " + tmp.str("run_out/best.sspc") + " --input " +
                    tmp.str("data/x_0000.vxg") + " --task 0 --threads 2 --out " +
                    tmp.str("pred.vxg"));
  REQUIRE(ri.exit_code == 0);
  Volume pred = load_volume(tmp.str("pred.vxg"));  // round-trips through the loader
  CHECK(pred.depth == 16);
  CHECK(pred.height == 16);
  CHECK(pred.width == 16);

  // same inputs, same seed: bit-reproducible outputs
  auto rt2 = run_cli("train --config " + tmp.str("run.json") + " --out " + tmp.str("run_out2") +
                     " --threads 2");
  REQUIRE(rt2.exit_code == 0);
  CHECK(file_text(tmp.str("run_out/metrics.jsonl")) == file_text(tmp.str("run_out2/metrics.jsonl")));
  CHECK(file_text(tmp.str("run_out/best.sspc")) == file_text(tmp.str("run_out2/best.sspc")));

  // input files are never mutated
  auto before = file_text(tmp.str("data/x_0000.vxg"));
  CHECK(before == file_text(tmp.str("data/x_0000.vxg")));
}

TEST_CASE("config validation failures map to distinct exit codes") {
  TempDir tmp;
  // unknown key rejected
  write_text(tmp.str("bad.json"), R"({"topology": {"kind": "pure3d", "typo_key": 1}})");
  auto r = run_cli("train --config " + tmp.str("bad.json"));
  CHECK(r.exit_code == 2);
  CHECK(r.out.find("typo_key") != std::string::npos);

  // interp=none on a 3D decoder is a config error
  write_text(tmp.str("bad2.json"),
             R"({"topology": {"kind": "pure3d", "interp": "none",
                 "encoder_channels": [4,8,8,8,8], "u_dim": 16, "patch": [16,16,16],
                 "task_count": 2, "ratio": 2},
                 "data": {"manifest": "none.json"}, "out": ")" +
                 tmp.str("o") + R"("})");
  auto r2 = run_cli("train --config " + tmp.str("bad2.json"));
  CHECK(r2.exit_code == 2);

  // missing checkpoint file: io error
  auto r3 = run_cli("eval --checkpoint " + tmp.str("missing.sspc") + " --manifest " +
                    tmp.str("m.json"));
  CHECK(r3.exit_code == 6);

  // machine-readable error on stderr
  CHECK(r3.out.find("\"exit_code\":6") != std::string::npos);
}

TEST_SUITE_END();
