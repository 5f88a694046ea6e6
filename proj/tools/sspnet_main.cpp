// Command-line front end: synthetic dataset generation, training,
// evaluation, single-volume inference and analytic resource profiling.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sspnet/parallel.hpp"
#include "sspnet/pipeline.hpp"
#include "sspnet/profiler.hpp"
#include "sspnet/rng.hpp"
#include "sspnet/run_config.hpp"
#include "sspnet/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ssp;

namespace {

int exit_code_for(errc c) {
  switch (c) {
    case errc::ok: return 0;
    case errc::config: return 2;
    case errc::geometry: return 3;
    case errc::contract: return 4;
    case errc::label: return 5;
    case errc::io: return 6;
    case errc::bad_header: return 7;
    case errc::truncated: return 8;
    case errc::bad_version: return 9;
    case errc::numeric: return 10;
  }
  return 1;
}

const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0   success\n"
    "  2   invalid argument or config (unknown key, bad enum, divisibility)\n"
    "  3   sparse-view geometry violation (r * D_i != D_s)\n"
    "  4   shape/contract violation\n"
    "  5   task label out of range\n"
    "  6   file I/O failure (missing path, refusing to overwrite)\n"
    "  7   malformed file header\n"
    "  8   truncated payload\n"
    "  9   unsupported format version\n"
    "  10  non-finite values during training\n"
    "\n"
    "SSP_THREADS sets the worker count when --threads is not given.";

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("SSP_THREADS")) threads = std::atoi(env);
  }
  if (threads > 0) set_num_threads(threads);
}

void ensure_out_dir(const std::string& dir, bool force) {
  if (fs::exists(dir)) {
    check(fs::is_directory(dir), errc::io, "output path exists and is not a directory: " + dir);
    if (!fs::is_empty(dir))
      check(force, errc::io, "output directory not empty (use --force): " + dir);
  } else {
    fs::create_directories(dir);
  }
}

std::string two_digit(int64_t v, int width = 4) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

json metrics_json(const MetricTriple& m) {
  json j;
  j["mse"] = m.mse;
  j["mae"] = m.mae;
  if (m.r2_defined)
    j["r2"] = m.r2;
  else
    j["r2"] = nullptr;
  return j;
}

// ------------------------------------------------------------------- synth

struct SynthArgs {
  uint64_t seed = 0;
  int tasks = 3;
  int64_t per_task = 20;
  std::vector<int64_t> shape{16, 64, 64};
  int ratio = 2;
  std::string out;
  bool force = false;
  int threads = 0;
};

void cmd_synth(const SynthArgs& a) {
  apply_threads(a.threads);
  check(a.tasks >= 1, errc::config, "--tasks must be >= 1");
  check(a.per_task >= 1, errc::config, "--per-task must be >= 1");
  check(a.shape.size() == 3, errc::config, "--shape expects Z,H,W");
  const int64_t d = a.shape[0], h = a.shape[1], w = a.shape[2];
  check(d % a.ratio == 0, errc::geometry,
        "shape depth " + std::to_string(d) + " is not divisible by ratio " +
            std::to_string(a.ratio));
  ensure_out_dir(a.out, a.force);

  DatasetMeta meta;
  meta.task_count = a.tasks;
  meta.seed = a.seed;
  meta.ratio = a.ratio;
  meta.depth = d;
  meta.height = h;
  meta.width = w;
  for (int t = 0; t < a.tasks; ++t) meta.task_names.push_back("structure" + std::to_string(t));

  const SplitCounts counts = split_counts(a.per_task);
  for (int t = 0; t < a.tasks; ++t) {
    for (int64_t i = 0; i < a.per_task; ++i) {
      const int64_t n = static_cast<int64_t>(t) * a.per_task + i;
      Sample s = synth_sample(mix_seed(a.seed, static_cast<uint64_t>(n)), t, a.tasks, d, h, w,
                              a.ratio);
      SampleRecord rec;
      rec.x_path = "x_" + two_digit(n) + ".vxg";
      rec.y_path = "y_" + two_digit(n) + ".vxg";
      rec.task = t;
      rec.split = split_name(split_for_index(i, counts));
      save_volume(s.x.vol, (fs::path(a.out) / rec.x_path).string());
      save_volume(s.y, (fs::path(a.out) / rec.y_path).string());
      meta.samples.push_back(std::move(rec));
    }
  }
  save_manifest(meta, (fs::path(a.out) / "manifest.json").string());

  json resolved;
  resolved["command"] = "synth";
  resolved["seed"] = a.seed;
  resolved["tasks"] = a.tasks;
  resolved["per_task"] = a.per_task;
  resolved["shape"] = a.shape;
  resolved["ratio"] = a.ratio;
  resolved["split"] = {{"train", counts.train}, {"val", counts.val}, {"test", counts.test}};
  std::ofstream os((fs::path(a.out) / "resolved.json").string());
  os << resolved.dump(2) << "\n";
  check(os.good(), errc::io, "failed to write resolved.json");
  std::cout << "wrote " << meta.samples.size() << " samples to " << a.out << "\n";
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string out;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string interp, interp_mode;
  bool force = false;
  int threads = 0;
};

void cmd_train(const TrainArgs& a) {
  apply_threads(a.threads);
  RunConfig cfg = load_run_config(a.config);
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (a.seed_set) cfg.train.seed = a.seed;
  if (!a.interp.empty()) cfg.topology.interp = parse_interp_kind(a.interp);
  if (!a.interp_mode.empty()) cfg.topology.interp_mode = parse_interp_mode(a.interp_mode);
  check(!cfg.manifest.empty(), errc::config, "config is missing data.manifest");
  check(!cfg.out_dir.empty(), errc::config, "no output directory (config key 'out' or --out)");
  validate_topology(cfg.topology);
  ensure_out_dir(cfg.out_dir, a.force);

  // resolve the manifest path against the config file location
  fs::path manifest = cfg.manifest;
  if (manifest.is_relative()) manifest = fs::path(a.config).parent_path() / manifest;
  Dataset data = load_dataset(manifest.string());

  save_run_config(cfg, (fs::path(cfg.out_dir) / "resolved.json").string());
  TrainResult result = train(cfg.train, cfg.topology, data);

  std::ofstream log((fs::path(cfg.out_dir) / "metrics.jsonl").string());
  check(log.good(), errc::io, "failed to open metrics.jsonl");
  for (const auto& rec : result.log) {
    json line;
    line["step"] = rec.step;
    line["loss"] = rec.train_loss;
    line["mse"] = rec.val.mse;
    line["mae"] = rec.val.mae;
    line["r2"] = rec.val.r2_defined ? json(rec.val.r2) : json(nullptr);
    json per_task = json::array();
    for (const auto& m : rec.per_task) per_task.push_back(metrics_json(m));
    line["per_task"] = per_task;
    log << line.dump() << "\n";
  }
  save_checkpoint(result.best, (fs::path(cfg.out_dir) / "best.sspc").string());
  save_checkpoint(result.final, (fs::path(cfg.out_dir) / "final.sspc").string());
  std::cout << "trained " << result.steps_run << " steps; best val mse "
            << result.best.best_val_mse << "; checkpoints in " << cfg.out_dir << "\n";
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  std::string split = "val";
  std::string out;
  int threads = 0;
};

void cmd_eval(const EvalArgs& a) {
  apply_threads(a.threads);
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  Model model = restore_model(ckpt);
  Dataset data = load_dataset(a.manifest);
  Split split = Split::val;
  if (a.split == "train")
    split = Split::train;
  else if (a.split == "val")
    split = Split::val;
  else if (a.split == "test")
    split = Split::test;
  else
    fail(errc::config, "--split must be train|val|test, got " + a.split);

  std::vector<MetricTriple> per_volume;
  std::vector<int> tasks;
  for (size_t idx : data.indices(split)) {
    const auto& s = data.samples[idx];
    Volume pred = predict_volume(model, s.x, s.task);
    per_volume.push_back(eval_metrics(pred, s.y));
    tasks.push_back(s.task);
  }
  check(!per_volume.empty(), errc::config, "split '" + a.split + "' has no samples");
  TaskedMetrics agg = aggregate_by_task(per_volume, tasks, data.task_count);

  json report;
  report["split"] = a.split;
  report["volumes"] = per_volume.size();
  report["overall"] = metrics_json(agg.overall);
  json per_task = json::array();
  for (const auto& m : agg.per_task) per_task.push_back(metrics_json(m));
  report["per_task"] = per_task;
  const std::string text = report.dump(2);
  if (!a.out.empty()) {
    std::ofstream os(a.out);
    os << text << "\n";
    check(os.good(), errc::io, "failed to write " + a.out);
  }
  std::cout << text << "\n";
}

// ------------------------------------------------------------------- infer

struct InferArgs {
  std::string checkpoint;
  std::string input;
  int task = 0;
  std::string out;
  int threads = 0;
};

void cmd_infer(const InferArgs& a) {
  apply_threads(a.threads);
  check(!a.out.empty(), errc::config, "--out is required");
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  Model model = restore_model(ckpt);
  Volume raw = load_volume(a.input);
  SparseStack stack;
  stack.vol = zscore(raw);  // inputs are consumed z-scored, like training data
  stack.vol.voxel_z = raw.voxel_z;
  stack.vol.voxel_y = raw.voxel_y;
  stack.vol.voxel_x = raw.voxel_x;
  stack.ratio = model.config.ratio;
  stack.dense_depth = raw.depth * model.config.ratio;
  Volume pred = predict_volume(model, stack, a.task);
  save_volume(pred, a.out);
  std::cout << "wrote prediction " << pred.depth << "x" << pred.height << "x" << pred.width
            << " to " << a.out << "\n";
}

// ----------------------------------------------------------------- profile

struct ProfileArgs {
  std::string config;
  std::string kind;
  std::string out;
  bool json_stdout = false;
  int threads = 0;
};

void cmd_profile(const ProfileArgs& a) {
  apply_threads(a.threads);
  RunConfig cfg;
  if (!a.config.empty()) cfg = load_run_config(a.config);
  if (!a.kind.empty()) cfg.topology.kind = parse_topology_kind(a.kind);
  validate_topology(cfg.topology);
  Network net = build_network(cfg.topology, 0);
  ResourceReport rep = count_resources(net, cfg.topology);
  if (a.json_stdout)
    std::cout << report_to_json(rep) << "\n";
  else
    std::cout << render_table(rep);
  if (!a.out.empty()) {
    std::ofstream os(a.out);
    os << report_to_json(rep) << "\n";
    check(os.good(), errc::io, "failed to write " + a.out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse-view 3D fluorescence prediction toolkit"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
  synth->add_option("--seed", sa.seed, "generator seed");
  synth->add_option("--tasks", sa.tasks, "number of structure families (1..12)");
  synth->add_option("--per-task", sa.per_task, "samples per task");
  synth->add_option("--shape", sa.shape, "target grid Z H W")->expected(3);
  synth->add_option("--ratio", sa.ratio, "Z sparsity ratio r");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_flag("--force", sa.force, "overwrite a non-empty output directory");
  synth->add_option("--threads", sa.threads, "worker threads (default: SSP_THREADS or all)");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model from a run config");
  train_cmd->add_option("--config", ta.config, "run config JSON")->required();
  train_cmd->add_option("--out", ta.out, "output directory (overrides config)");
  auto* seed_opt = train_cmd->add_option("--seed", ta.seed, "training seed (overrides config)");
  train_cmd->add_option("--interp", ta.interp, "prefix|postfix|none (overrides config)");
  train_cmd->add_option("--interp-mode", ta.interp_mode, "nearest|linear (overrides config)");
  train_cmd->add_flag("--force", ta.force, "overwrite a non-empty output directory");
  train_cmd->add_option("--threads", ta.threads, "worker threads");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "SSPC1 checkpoint")->required();
  eval_cmd->add_option("--manifest", ea.manifest, "dataset manifest JSON")->required();
  eval_cmd->add_option("--split", ea.split, "train|val|test (default val)");
  eval_cmd->add_option("--out", ea.out, "also write the JSON report here");
  eval_cmd->add_option("--threads", ea.threads, "worker threads");

  InferArgs ia;
  auto* infer_cmd = app.add_subcommand("infer", "predict one volume from a TL stack");
  infer_cmd->add_option("--checkpoint", ia.checkpoint, "SSPC1 checkpoint")->required();
  infer_cmd->add_option("--input", ia.input, "input VXG1 stack (imaging depth)")->required();
  infer_cmd->add_option("--task", ia.task, "structure index to predict")->required();
  infer_cmd->add_option("--out", ia.out, "output VXG1 path")->required();
  infer_cmd->add_option("--threads", ia.threads, "worker threads");

  ProfileArgs pa;
  auto* profile_cmd = app.add_subcommand("profile", "analytic MACs/memory report");
  profile_cmd->add_option("--config", pa.config, "run config JSON (defaults: paper scale)");
  profile_cmd->add_option("--kind", pa.kind,
                          "pure2d|pure3d|hybrid_3to2d|hybrid_2to3d (overrides config)");
  profile_cmd->add_option("--out", pa.out, "write the JSON report here");
  profile_cmd->add_flag("--json", pa.json_stdout, "print JSON instead of the table");
  profile_cmd->add_option("--threads", pa.threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    json err;
    err["error"] = e.what();
    err["category"] = "config";
    err["exit_code"] = 2;
    std::cerr << err.dump() << "\n";
    return 2;
  }

  try {
    if (*synth) cmd_synth(sa);
    if (*train_cmd) {
      ta.seed_set = seed_opt->count() > 0;
      cmd_train(ta);
    }
    if (*eval_cmd) cmd_eval(ea);
    if (*infer_cmd) cmd_infer(ia);
    if (*profile_cmd) cmd_profile(pa);
  } catch (const error& e) {
    json err;
    err["error"] = e.what();
    err["category"] = errc_name(e.code());
    err["exit_code"] = exit_code_for(e.code());
    std::cerr << err.dump() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    err["category"] = "internal";
    err["exit_code"] = 1;
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
