// Command-line front end: train, evaluate, sweep, compare and preview.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "reachlab/a3c_trainer.hpp"
#include "reachlab/robustness_bench.hpp"
#include "reachlab/run_config.hpp"

namespace fs = std::filesystem;
using namespace reachlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::string grid;
  std::string out;
};

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg = RunConfig::baseline();
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw ConfigError(f.config, 0, "config file not found");
    cfg = load_run_config(f.config);
  }
  apply_env_overrides(cfg);
  if (!f.variant.empty()) apply_override(cfg, "reach_env", "variant", f.variant, "--variant");
  if (f.seed) apply_override(cfg, "run", "seed", std::to_string(*f.seed), "--seed");
  if (f.episodes) {
    if (*f.episodes < 1) throw ConfigError("--episodes", 0, "must be >= 1");
    cfg.grid.episodes_per_cell = *f.episodes;
  }
  if (!f.grid.empty()) {
    try {
      parse_grid_flag(f.grid, cfg.grid);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("--grid", 0, e.what());
    }
  }
  if (!f.out.empty()) cfg.output_dir = f.out;
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool with_grid, bool with_out = true) {
  cmd->add_option("--config", f.config, "Run configuration file");
  cmd->add_option("--variant", f.variant, "MDP variant M0..M6");
  cmd->add_option("--seed", f.seed, "Master seed");
  if (with_out) cmd->add_option("--out", f.out, "Output directory");
  if (with_grid) {
    cmd->add_option("--episodes", f.episodes, "Episodes per grid cell");
    cmd->add_option("--grid", f.grid, "az_min:az_max:step,el_min:el_max:step");
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

NetParams load_checkpoint(const std::string& path, const RunConfig& cfg) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  const int K = static_cast<int>(action_count(cfg.env.mdp.variant));
  try {
    return load_params(path, K);
  } catch (const std::runtime_error& e) {
    throw UsageError(std::string("checkpoint/config mismatch: ") + e.what());
  }
}

int cmd_train(const CommonFlags& f, bool force, bool resume, bool quiet) {
  RunConfig cfg = resolve_config(f);
  const fs::path dir = cfg.output_dir;
  if (fs::exists(dir / "curve.csv") && !force && !resume)
    throw UsageError("refusing to overwrite existing run in " + dir.string() +
                     " (pass --force or --resume)");
  fs::create_directories(dir);
  write_file(dir / "run_config.ini", to_ini(cfg));
  TrainOptions opts;
  opts.output_dir = dir;
  opts.resume = resume;
  opts.log_progress = !quiet;
  const TrainResult r = train(cfg.train, cfg.env, opts);
  for (const auto& w : r.workers)
    if (!w.error.empty()) std::cerr << "worker " << w.worker_id << " failed: " << w.error << '\n';
  std::cout << "trained " << r.global_steps << " steps; " << r.curve.size()
            << " evaluation points; artifacts in " << dir.string() << '\n';
  return kExitOk;
}

int cmd_evaluate(const CommonFlags& f, const std::string& checkpoint, int episodes) {
  RunConfig cfg = resolve_config(f);
  const NetParams params = load_checkpoint(checkpoint, cfg);
  EvalOptions opts;
  opts.episodes = episodes;
  opts.greedy = cfg.train.eval_greedy;
  opts.seed = cfg.seed;
  EnvConfig env = cfg.env;
  if (cfg.train.eval_dr) env.dr = *cfg.train.eval_dr;
  const auto p = evaluate_checkpoint(params, env, opts);
  std::cout << kCurveHeader << '\n' << format_curve_row(p) << '\n';
  return kExitOk;
}

int cmd_sweep(const CommonFlags& f, const std::string& checkpoint, bool dry_run, bool image,
              int threads) {
  RunConfig cfg = resolve_config(f);
  if (dry_run) {
    std::cout << "cells=" << cfg.grid.cell_count() << " episodes_per_cell=" << cfg.grid.episodes_per_cell
              << " total_episodes=" << planned_episodes(cfg.grid) << '\n';
    return kExitOk;
  }
  if (checkpoint.empty()) throw UsageError("sweep needs --checkpoint");
  const NetParams params = load_checkpoint(checkpoint, cfg);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  SweepOptions opts;
  opts.threads = threads > 0 ? threads : cfg.sweep_threads;
  opts.greedy = cfg.sweep_greedy;
  opts.partial_csv = dir / "heatmap.partial.csv";
  HeatMapGrid grid = sweep(params, cfg.grid, cfg.env, cfg.seed, opts);
  grid.provenance.model_id = cfg.model_id;
  write_heatmap_csv(grid, dir / "heatmap.csv");
  write_heatmap_json(grid, dir / "heatmap.json");
  write_file(dir / "run_config.ini", to_ini(cfg));
  if (image) write_heatmap_pgm(grid, dir / "heatmap.pgm");
  double mean = 0.0;
  for (const auto& c : grid.cells) mean += c.accuracy_pct;
  mean /= static_cast<double>(grid.cells.size());
  auto side = [&grid](bool inside) {
    const bool any = std::any_of(grid.cells.begin(), grid.cells.end(),
                                 [inside](const CellResult& c) { return c.in_training_region == inside; });
    return any ? region_mean_accuracy(grid, inside) : std::nan("");
  };
  std::printf("cells=%zu mean_accuracy_pct=%.4f inside=%.4f outside=%.4f\n", grid.cells.size(), mean,
              side(true), side(false));
  return kExitOk;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& out) {
  for (const auto& p : {a, b})
    if (!fs::exists(p)) throw UsageError("heat map not found: " + p);
  IncrementGrid inc;
  try {
    inc = compare(read_heatmap_csv(a), read_heatmap_csv(b));
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("cannot compare: ") + e.what());
  }
  const fs::path dest = out.empty() ? fs::path("increment.csv") : fs::path(out);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  write_increment_csv(inc, dest);
  std::printf("grand_mean_increment_pct=%.4f\n", inc.grand_mean);
  return kExitOk;
}

int cmd_preview(const CommonFlags& f, const std::string& pose, const std::string& shadow,
                const std::string& out) {
  RunConfig cfg = resolve_config(f);
  double az = 180.0, el = -30.0;
  if (!pose.empty()) {
    char comma = 0;
    std::istringstream in(pose);
    if (!(in >> az >> comma >> el) || comma != ',' || !in.eof())
      throw UsageError("--pose expects 'azimuth,elevation' in degrees");
  }
  if (!shadow.empty()) apply_override(cfg, "scene_renderer", "shadow", shadow, "--shadow");
  cfg.env.dr = DrSpec::fixed(az, el);
  Rng rng(cfg.seed);
  const Observation obs = reset(cfg.env, rng);
  const fs::path dest = out.empty() ? fs::path("preview.ppm") : fs::path(out);
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  write_ppm(dest, obs.frame);
  std::printf("wrote %s (initial distance %.4f m)\n", dest.string().c_str(), obs.state.initial_distance);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reachlab: visuomotor reaching with camera-pose randomization"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, sweep_f, preview_f;
  bool force = false, resume = false, quiet = false;
  auto* train_cmd = app.add_subcommand("train", "Train an A3C agent and log evaluation curves");
  add_common(train_cmd, train_f, false);
  train_cmd->add_flag("--force", force, "Overwrite an existing run");
  train_cmd->add_flag("--resume", resume, "Continue from the run's latest checkpoint");
  train_cmd->add_flag("--quiet", quiet, "No progress lines");

  std::string eval_ckpt;
  int eval_episodes = 40;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on the configured camera distribution");
  add_common(eval_cmd, eval_f, false);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Weight file")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "Evaluation episodes")->check(CLI::PositiveNumber);

  std::string sweep_ckpt;
  bool dry_run = false, image = false;
  int threads = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run the camera-pose robustness grid");
  add_common(sweep_cmd, sweep_f, true);
  sweep_cmd->add_option("--checkpoint", sweep_ckpt, "Weight file");
  sweep_cmd->add_flag("--dry-run", dry_run, "Only report the scheduled episode count");
  sweep_cmd->add_flag("--image", image, "Also write heatmap.pgm");
  sweep_cmd->add_option("--threads", threads, "Parallel cells (default from config)");

  std::string cmp_a, cmp_b, cmp_out;
  auto* cmp_cmd = app.add_subcommand("compare", "Cell-wise accuracy increment A - B of two heat maps");
  cmp_cmd->add_option("a", cmp_a, "Heat map CSV (e.g. randomized model)")->required();
  cmp_cmd->add_option("b", cmp_b, "Heat map CSV (e.g. baseline model)")->required();
  cmp_cmd->add_option("--out", cmp_out, "Increment CSV path");

  std::string pose, shadow, preview_out;
  auto* prev_cmd = app.add_subcommand("render-preview", "Write one reset frame as a PPM");
  add_common(prev_cmd, preview_f, false, false);
  prev_cmd->add_option("--pose", pose, "azimuth,elevation in degrees");
  prev_cmd->add_option("--shadow", shadow, "on|off");
  prev_cmd->add_option("--out", preview_out, "Output .ppm path (default preview.ppm)");

  bool dr_defaults = false;
  auto* cfg_cmd = app.add_subcommand("config", "Print a default run configuration");
  cfg_cmd->add_flag("--dr", dr_defaults, "Domain-randomization defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_f, force, resume, quiet);
    if (*eval_cmd) return cmd_evaluate(eval_f, eval_ckpt, eval_episodes);
    if (*sweep_cmd) return cmd_sweep(sweep_f, sweep_ckpt, dry_run, image, threads);
    if (*cmp_cmd) return cmd_compare(cmp_a, cmp_b, cmp_out);
    if (*prev_cmd) return cmd_preview(preview_f, pose, shadow, preview_out);
    if (*cfg_cmd) {
      std::cout << to_ini(dr_defaults ? RunConfig::randomized() : RunConfig::baseline());
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
