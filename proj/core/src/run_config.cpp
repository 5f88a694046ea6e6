#include "sspnet/run_config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace ssp {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    check(known.count(it.key()) > 0, errc::config,
          std::string("unknown key '") + it.key() + "' in " + where);
}

json topology_to_json(const TopologyConfig& c) {
  json j;
  j["kind"] = topology_kind_name(c.kind);
  j["encoder_channels"] = c.encoder_channels;
  j["u_dim"] = c.u_dim;
  j["patch"] = {c.patch_z, c.patch_h, c.patch_w};
  j["interp"] = interp_kind_name(c.interp);
  j["interp_mode"] = interp_mode_name(c.interp_mode);
  j["projection_space"] = projection_space_name(c.projection_space);
  j["task_count"] = c.task_count;
  j["ratio"] = c.ratio;
  return j;
}

TopologyConfig topology_from_json(const json& j) {
  reject_unknown(j,
                 {"kind", "encoder_channels", "u_dim", "patch", "interp", "interp_mode",
                  "projection_space", "task_count", "ratio"},
                 "topology config");
  TopologyConfig c;
  try {
    if (j.contains("kind")) c.kind = parse_topology_kind(j["kind"].get<std::string>());
    if (j.contains("encoder_channels")) {
      const auto v = j["encoder_channels"].get<std::vector<int64_t>>();
      check(v.size() == 5, errc::config, "encoder_channels must list exactly 5 levels");
      for (size_t i = 0; i < 5; ++i) c.encoder_channels[i] = v[i];
    }
    if (j.contains("u_dim")) c.u_dim = j["u_dim"].get<int64_t>();
    if (j.contains("patch")) {
      const auto v = j["patch"].get<std::vector<int64_t>>();
      check(v.size() == 3, errc::config, "patch must be [Z,H,W]");
      c.patch_z = v[0];
      c.patch_h = v[1];
      c.patch_w = v[2];
    }
    if (j.contains("interp")) c.interp = parse_interp_kind(j["interp"].get<std::string>());
    if (j.contains("interp_mode"))
      c.interp_mode = parse_interp_mode(j["interp_mode"].get<std::string>());
    if (j.contains("projection_space"))
      c.projection_space = parse_projection_space(j["projection_space"].get<std::string>());
    if (j.contains("task_count")) c.task_count = j["task_count"].get<int>();
    if (j.contains("ratio")) c.ratio = j["ratio"].get<int>();
  } catch (const json::exception& e) {
    fail(errc::config, std::string("topology config type error: ") + e.what());
  }
  return c;
}

TrainConfig train_from_json(const json& j) {
  reject_unknown(
      j, {"steps", "batch_size", "learning_rate", "eval_interval", "seed", "stop_at_r2", "augment"},
      "train config");
  TrainConfig c;
  try {
    if (j.contains("steps")) c.steps = j["steps"].get<int64_t>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("learning_rate")) c.lr = j["learning_rate"].get<double>();
    if (j.contains("eval_interval")) c.eval_interval = j["eval_interval"].get<int64_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("stop_at_r2")) c.stop_at_r2 = j["stop_at_r2"].get<double>();
    if (j.contains("augment")) c.augment = j["augment"].get<bool>();
  } catch (const json::exception& e) {
    fail(errc::config, std::string("train config type error: ") + e.what());
  }
  return c;
}

json train_to_json(const TrainConfig& c) {
  json j;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.lr;
  j["eval_interval"] = c.eval_interval;
  j["seed"] = c.seed;
  if (c.stop_at_r2) j["stop_at_r2"] = *c.stop_at_r2;
  j["augment"] = c.augment;
  return j;
}

}  // namespace

std::string topology_to_json_string(const TopologyConfig& cfg) {
  return topology_to_json(cfg).dump();
}

TopologyConfig topology_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(errc::config, std::string("topology config parse error: ") + e.what());
  }
  return topology_from_json(j);
}

RunConfig run_config_from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(errc::config, std::string("run config parse error: ") + e.what());
  }
  reject_unknown(j, {"topology", "train", "data", "out"}, "run config");
  RunConfig cfg;
  if (j.contains("topology")) cfg.topology = topology_from_json(j["topology"]);
  if (j.contains("train")) cfg.train = train_from_json(j["train"]);
  if (j.contains("data")) {
    reject_unknown(j["data"], {"manifest"}, "data config");
    if (j["data"].contains("manifest")) cfg.manifest = j["data"]["manifest"].get<std::string>();
  }
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  check(is.good(), errc::io, "cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return run_config_from_json_string(text);
}

std::string run_config_to_json_string(const RunConfig& cfg) {
  json j;
  j["topology"] = topology_to_json(cfg.topology);
  j["train"] = train_to_json(cfg.train);
  j["data"] = {{"manifest", cfg.manifest}};
  j["out"] = cfg.out_dir;
  return j.dump(2);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  check(os.good(), errc::io, "cannot open for writing: " + path);
  os << run_config_to_json_string(cfg) << "\n";
  check(os.good(), errc::io, "write failed: " + path);
}

}  // namespace ssp
