#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reachlab/policy_value_net.hpp"
#include "reachlab/reach_env.hpp"

namespace reachlab {

struct TrainConfig {
  std::int64_t total_steps = 3'000'000;
  double gamma = 0.99;
  int n_step = 20;
  int workers = 8;
  double learning_rate = 1e-4;
  double entropy_weight = 0.01;
  double value_weight = 0.5;
  double grad_clip_norm = 40.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::int64_t eval_interval = 50'000;
  int eval_episodes = 40;
  bool eval_greedy = true;
  /// Camera distribution for evaluation episodes; the training one when unset.
  std::optional<DrSpec> eval_dr;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

struct TrainingCurvePoint {
  std::int64_t global_step = 0;
  double mean_dist = 0.0;
  double max_dist = 0.0;
  double min_dist = 0.0;
  double mean_reward = 0.0;
  double mean_initial_dist = 0.0;
  double success_rate = 0.0;
  int episodes = 0;
};

inline constexpr std::string_view kCurveHeader = "global_step,mean_dist,max_dist,min_dist,mean_reward";

std::string format_curve_row(const TrainingCurvePoint& p);

/// Discounted returns computed backward from the bootstrap value.
std::vector<double> n_step_return(std::span<const double> rewards, double bootstrap_value,
                                  double gamma);

/// Policy, value and entropy terms for a collected segment. Advantages are
/// the returns minus the cached value estimates.
LossBreakdown compute_loss(const Trajectory& traj, std::span<const double> returns,
                           const LossSpec& spec);

LossTargets make_targets(const Trajectory& traj, std::span<const double> returns);

/// Scales gradients in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

/// Parameters plus shared Adam moments. Every write happens under one mutex.
class SharedStore {
 public:
  SharedStore(NetParams params, const TrainConfig& config);

  void apply(const Gradients& grads);
  NetParams snapshot() const;
  void copy_to(NetParams& out) const;

  std::int64_t global_step() const { return global_step_.load(); }
  void set_global_step(std::int64_t s) { global_step_.store(s); }
  /// Reserves one environment step below `limit`; returns the reserved index
  /// or nothing when the budget is exhausted.
  std::optional<std::int64_t> claim_step(std::int64_t limit);
  std::int64_t updates() const;

  void save_optimizer(const std::filesystem::path& path) const;
  void load_optimizer(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  NetParams params_;
  std::vector<float> m_;
  std::vector<float> v_;
  std::int64_t t_ = 0;
  double lr_, beta1_, beta2_, eps_;
  std::atomic<std::int64_t> global_step_{0};
};

struct EvalOptions {
  int episodes = 40;
  bool greedy = true;
  std::uint64_t seed = 0;
  /// Success threshold used for `success_rate` reporting.
  double tolerance = 0.10;
};

/// Runs frozen-parameter episodes in `env_config` and aggregates final
/// distances and cumulative rewards.
TrainingCurvePoint evaluate_checkpoint(const NetParams& params, const EnvConfig& env_config,
                                       const EvalOptions& options);

/// Action per head, argmax or sampled.
std::array<int, kNumHeads> select_actions(std::span<const float> probs, int actions_per_joint,
                                          bool greedy, Rng& rng);

struct SegmentInfo {
  int worker_id = 0;
  int length = 0;
  bool terminal = false;  // ended at an episode boundary (bootstrap 0)
  double bootstrap = 0.0;
};

struct WorkerReport {
  int worker_id = 0;
  std::int64_t steps = 0;
  std::int64_t updates = 0;
  std::int64_t episodes = 0;
  std::string error;
};

struct WorkerHooks {
  std::function<void(const SegmentInfo&)> on_segment;
  /// Called after a gradient application when global steps crossed one or
  /// more evaluation thresholds during the segment.
  std::function<void(std::span<const std::int64_t> thresholds, const NetParams& snapshot)> on_eval;
};

/// Rollout/update loop of one asynchronous worker. Runs until the shared
/// step budget is exhausted. Environment faults end this worker only; the
/// diagnostic lands in the report.
WorkerReport worker_loop(int worker_id, SharedStore& store, const TrainConfig& config,
                         const EnvConfig& env_config, const WorkerHooks& hooks = {});

struct TrainResult {
  NetParams final_params;
  std::vector<TrainingCurvePoint> curve;
  std::vector<WorkerReport> workers;
  std::int64_t global_steps = 0;
};

struct TrainOptions {
  std::filesystem::path output_dir;
  bool resume = false;
  bool log_progress = false;
};

/// Launches the workers, evaluates every eval_interval global steps, streams
/// rows to curve.csv and checkpoints latest/best/final parameters.
TrainResult train(const TrainConfig& config, const EnvConfig& env_config,
                  const TrainOptions& options);

std::vector<TrainingCurvePoint> read_curve(const std::filesystem::path& path);

}  // namespace reachlab
