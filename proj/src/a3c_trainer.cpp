#include "reachlab/a3c_trainer.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "flush_denormals.hpp"

namespace reachlab {

namespace {

constexpr std::uint64_t kEvalStream = 0xE7A1;
constexpr std::uint64_t kInitStream = 0x1A17;

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"total_steps", c.total_steps},   {"gamma", c.gamma},
                   {"n_step", c.n_step},             {"workers", c.workers},
                   {"learning_rate", c.learning_rate}, {"entropy_weight", c.entropy_weight},
                   {"value_weight", c.value_weight}, {"grad_clip_norm", c.grad_clip_norm},
                   {"adam_beta1", c.adam_beta1},     {"adam_beta2", c.adam_beta2},
                   {"adam_epsilon", c.adam_epsilon}, {"eval_interval", c.eval_interval},
                   {"eval_episodes", c.eval_episodes}, {"eval_greedy", c.eval_greedy},
                   {"seed", c.seed}};
  if (c.eval_dr) {
    j["eval_dr"] = {c.eval_dr->azimuth_lo, c.eval_dr->azimuth_hi, c.eval_dr->elevation_lo,
                    c.eval_dr->elevation_hi};
  }
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (total_steps < 0) fail("total_steps must be non-negative");
  if (n_step < 1) fail("n_step must be >= 1");
  if (workers < 1) fail("workers must be >= 1");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be non-negative");
  if (eval_interval < 1) fail("eval_interval must be >= 1");
  if (eval_episodes < 1) fail("eval_episodes must be >= 1");
  if (!(grad_clip_norm > 0.0)) fail("grad_clip_norm must be positive");
}

std::string format_curve_row(const TrainingCurvePoint& p) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%" PRId64 ",%.6f,%.6f,%.6f,%.6f", p.global_step, p.mean_dist,
                p.max_dist, p.min_dist, p.mean_reward);
  return buf;
}

std::vector<double> n_step_return(std::span<const double> rewards, double bootstrap_value,
                                  double gamma) {
  std::vector<double> out(rewards.size());
  double g = bootstrap_value;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    g = rewards[t] + gamma * g;
    out[t] = g;
  }
  return out;
}

LossTargets make_targets(const Trajectory& traj, std::span<const double> returns) {
  if (returns.size() != traj.steps.size())
    throw std::invalid_argument("returns are not aligned with the trajectory");
  LossTargets targets;
  targets.returns.assign(returns.begin(), returns.end());
  targets.advantages.resize(returns.size());
  for (std::size_t t = 0; t < returns.size(); ++t)
    targets.advantages[t] = returns[t] - static_cast<double>(traj.steps[t].cache.value);
  return targets;
}

LossBreakdown compute_loss(const Trajectory& traj, std::span<const double> returns,
                           const LossSpec& spec) {
  return trajectory_loss(traj, make_targets(traj, returns), spec);
}

double clip_global_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (float g : grads.data) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (float& g : grads.data) g *= scale;
  }
  return norm;
}

SharedStore::SharedStore(NetParams params, const TrainConfig& config)
    : params_(std::move(params)),
      m_(params_.data.size(), 0.0f),
      v_(params_.data.size(), 0.0f),
      lr_(config.learning_rate),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      eps_(config.adam_epsilon) {}

void SharedStore::apply(const Gradients& grads) {
  std::lock_guard lock(mutex_);
  if (!(grads.layout == params_.layout)) throw std::invalid_argument("gradient layout mismatch");
  ++t_;
  const double step = lr_ * std::sqrt(1.0 - std::pow(beta2_, static_cast<double>(t_))) /
                      (1.0 - std::pow(beta1_, static_cast<double>(t_)));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float lr = static_cast<float>(step), eps = static_cast<float>(eps_);
  const std::size_t n = params_.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grads.data[i];
    m_[i] = b1 * m_[i] + (1.0f - b1) * g;
    v_[i] = b2 * v_[i] + (1.0f - b2) * g * g;
    params_.data[i] -= lr * m_[i] / (std::sqrt(v_[i]) + eps);
  }
}

NetParams SharedStore::snapshot() const {
  std::lock_guard lock(mutex_);
  return params_;
}

void SharedStore::copy_to(NetParams& out) const {
  std::lock_guard lock(mutex_);
  if (out.data.size() != params_.data.size()) {
    out = params_;
  } else {
    std::copy(params_.data.begin(), params_.data.end(), out.data.begin());
  }
}

std::optional<std::int64_t> SharedStore::claim_step(std::int64_t limit) {
  std::int64_t cur = global_step_.load();
  while (cur < limit) {
    if (global_step_.compare_exchange_weak(cur, cur + 1)) return cur;
  }
  return std::nullopt;
}

std::int64_t SharedStore::updates() const {
  std::lock_guard lock(mutex_);
  return t_;
}

void SharedStore::save_optimizer(const std::filesystem::path& path) const {
  std::lock_guard lock(mutex_);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    const std::uint64_t n = m_.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(&t_), sizeof t_);
    out.write(reinterpret_cast<const char*>(m_.data()), static_cast<std::streamsize>(n * 4));
    out.write(reinterpret_cast<const char*>(v_.data()), static_cast<std::streamsize>(n * 4));
  }
  std::filesystem::rename(tmp, path);
}

void SharedStore::load_optimizer(const std::filesystem::path& path) {
  std::lock_guard lock(mutex_);
  std::ifstream in(path, std::ios::binary);
  std::uint64_t n = 0;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n) || n != m_.size())
    throw std::runtime_error(path.string() + ": optimizer state does not match the network");
  std::int64_t t = 0;
  in.read(reinterpret_cast<char*>(&t), sizeof t);
  in.read(reinterpret_cast<char*>(m_.data()), static_cast<std::streamsize>(n * 4));
  in.read(reinterpret_cast<char*>(v_.data()), static_cast<std::streamsize>(n * 4));
  if (!in) throw std::runtime_error(path.string() + ": truncated optimizer state");
  t_ = t;
}

std::array<int, kNumHeads> select_actions(std::span<const float> probs, int actions_per_joint,
                                          bool greedy, Rng& rng) {
  std::array<int, kNumHeads> actions{};
  for (int j = 0; j < kNumHeads; ++j) {
    const float* p = probs.data() + j * actions_per_joint;
    if (greedy) {
      actions[j] = static_cast<int>(std::max_element(p, p + actions_per_joint) - p);
      continue;
    }
    const double u = rng.canonical();
    double acc = 0.0;
    int choice = actions_per_joint - 1;
    for (int k = 0; k < actions_per_joint; ++k) {
      acc += p[k];
      if (u < acc) {
        choice = k;
        break;
      }
    }
    actions[j] = choice;
  }
  return actions;
}

TrainingCurvePoint evaluate_checkpoint(const NetParams& params, const EnvConfig& env_config,
                                       const EvalOptions& options) {
  const int K = params.actions_per_joint();
  if (static_cast<std::size_t>(K) != action_count(env_config.mdp.variant))
    throw std::invalid_argument("checkpoint head width does not match the MDP variant");
  const detail::FlushDenormals ftz;
  TrainingCurvePoint point;
  point.min_dist = std::numeric_limits<double>::infinity();
  point.max_dist = -std::numeric_limits<double>::infinity();
  StepCache<float> cache;
  int successes = 0;
  for (int e = 0; e < options.episodes; ++e) {
    Rng env_rng(derive_seed({options.seed, static_cast<std::uint64_t>(e), 0}));
    Rng act_rng(derive_seed({options.seed, static_cast<std::uint64_t>(e), 1}));
    Observation obs = reset(env_config, env_rng);
    EpisodeState state = obs.state;
    FrameRGB frame = obs.frame;
    LstmState<float> lstm{};
    double total_reward = 0.0;
    while (!state.done) {
      forward(params, frame, lstm, cache);
      lstm = cache.next;
      const auto actions = select_actions(cache.probs, K, options.greedy, act_rng);
      StepResult r = step(env_config, state, actions);
      total_reward += r.reward;
      state = r.state;
      frame = r.frame;
    }
    const double d = state.last_distance;
    point.mean_dist += d;
    point.mean_initial_dist += state.initial_distance;
    point.max_dist = std::max(point.max_dist, d);
    point.min_dist = std::min(point.min_dist, d);
    point.mean_reward += total_reward;
    if (d <= options.tolerance) ++successes;
    ++point.episodes;
  }
  const double n = options.episodes;
  point.mean_dist /= n;
  point.mean_initial_dist /= n;
  point.mean_reward /= n;
  point.success_rate = successes / n;
  return point;
}

WorkerReport worker_loop(int worker_id, SharedStore& store, const TrainConfig& config,
                         const EnvConfig& env_config, const WorkerHooks& hooks) {
  WorkerReport report;
  report.worker_id = worker_id;
  const detail::FlushDenormals ftz;
  try {
    const std::uint64_t start = static_cast<std::uint64_t>(store.global_step());
    const auto wid = static_cast<std::uint64_t>(worker_id);
    Rng rng(derive_seed({config.seed, wid, start, 0}));
    ReachEnv env(env_config, derive_seed({config.seed, wid, start, 1}));
    const LossSpec loss{config.value_weight, config.entropy_weight};

    NetParams local;
    store.copy_to(local);
    const int K = local.actions_per_joint();
    if (static_cast<std::size_t>(K) != env.actions_per_joint())
      throw std::invalid_argument("network head width does not match the MDP variant");
    Gradients grads(K);
    Trajectory traj;
    traj.steps.reserve(static_cast<std::size_t>(config.n_step));
    StepCache<float> probe;
    std::vector<double> rewards;
    std::vector<std::int64_t> thresholds;

    env.reset();
    LstmState<float> lstm{};
    bool budget_left = true;
    while (budget_left) {
      store.copy_to(local);
      traj.params_hash = params_hash(local);
      traj.initial_state = lstm;
      traj.steps.clear();
      thresholds.clear();

      for (int k = 0; k < config.n_step; ++k) {
        const auto claimed = store.claim_step(config.total_steps);
        if (!claimed) {
          budget_left = false;
          break;
        }
        const std::int64_t after = *claimed + 1;
        if (after % config.eval_interval == 0) thresholds.push_back(after);

        auto& s = traj.steps.emplace_back();
        s.frame = env.frame();
        forward(local, s.frame, lstm, s.cache);
        lstm = s.cache.next;
        s.actions = select_actions(s.cache.probs, K, false, rng);
        const StepResult& r = env.step(s.actions);
        s.reward = r.reward;
        s.done = r.done;
        ++report.steps;
        if (r.done) {
          ++report.episodes;
          break;
        }
      }
      if (traj.steps.empty()) break;

      SegmentInfo info;
      info.worker_id = worker_id;
      info.length = static_cast<int>(traj.steps.size());
      info.terminal = traj.steps.back().done;
      if (!info.terminal) {
        forward(local, env.frame(), lstm, probe);
        info.bootstrap = probe.value;
      }
      rewards.clear();
      for (const auto& s : traj.steps) rewards.push_back(s.reward);
      const auto returns = n_step_return(rewards, info.bootstrap, config.gamma);

      grads.zero();
      backward(local, traj, make_targets(traj, returns), loss, grads);
      clip_global_norm(grads, config.grad_clip_norm);
      store.apply(grads);
      ++report.updates;

      if (hooks.on_segment) hooks.on_segment(info);
      if (info.terminal) {
        env.reset();
        lstm = {};
      }
      if (!thresholds.empty() && hooks.on_eval) hooks.on_eval(thresholds, store.snapshot());
    }
  } catch (const std::exception& e) {
    report.error = e.what();
    std::cerr << "worker " << worker_id << " stopped: " << e.what() << '\n';
  }
  return report;
}

std::vector<TrainingCurvePoint> read_curve(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read curve file " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kCurveHeader) throw std::runtime_error(path.string() + ": unexpected curve header");
  std::vector<TrainingCurvePoint> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    TrainingCurvePoint p;
    char comma;
    std::istringstream row(line);
    if (!(row >> p.global_step >> comma >> p.mean_dist >> comma >> p.max_dist >> comma >>
          p.min_dist >> comma >> p.mean_reward))
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    out.push_back(p);
  }
  return out;
}

TrainResult train(const TrainConfig& config, const EnvConfig& env_config,
                  const TrainOptions& options) {
  config.validate();
  const auto& dir = options.output_dir;
  std::filesystem::create_directories(dir);
  const auto curve_path = dir / "curve.csv";
  const auto state_path = dir / "trainer_state.json";
  const int K = static_cast<int>(action_count(env_config.mdp.variant));

  NetParams initial;
  std::int64_t start_step = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  std::vector<TrainingCurvePoint> curve;

  const bool resuming = options.resume && std::filesystem::exists(state_path);
  if (resuming) {
    std::ifstream in(state_path);
    const auto state = nlohmann::json::parse(in);
    start_step = state.at("global_step").get<std::int64_t>();
    best_dist = state.value("best_mean_dist", best_dist);
    initial = load_params(dir / "latest.bin", K);
    curve = read_curve(curve_path);
  } else {
    Rng init_rng(derive_seed({config.seed, kInitStream}));
    initial = init_params(init_rng, K);
    write_text(curve_path, std::string(kCurveHeader) + "\n");
  }
  write_text(dir / "train_config.json", to_json(config).dump(2) + "\n");

  SharedStore store(std::move(initial), config);
  if (resuming && std::filesystem::exists(dir / "optimizer.bin"))
    store.load_optimizer(dir / "optimizer.bin");
  store.set_global_step(start_step);

  EnvConfig eval_env = env_config;
  if (config.eval_dr) eval_env.dr = *config.eval_dr;
  EvalOptions eval_opts;
  eval_opts.episodes = config.eval_episodes;
  eval_opts.greedy = config.eval_greedy;
  eval_opts.seed = derive_seed({config.seed, kEvalStream});

  // Pending rows, written in threshold order.
  std::mutex curve_mutex;
  std::map<std::int64_t, TrainingCurvePoint> pending;
  std::int64_t next_row = (start_step / config.eval_interval + 1) * config.eval_interval;

  auto on_eval = [&](std::span<const std::int64_t> thresholds, const NetParams& snap) {
    const TrainingCurvePoint base = evaluate_checkpoint(snap, eval_env, eval_opts);
    const std::int64_t reached = store.global_step();
    std::lock_guard lock(curve_mutex);
    for (auto th : thresholds) {
      TrainingCurvePoint p = base;
      p.global_step = th;
      pending.emplace(th, p);
    }
    if (base.mean_dist < best_dist) {
      best_dist = base.mean_dist;
      save_params(snap, dir / "best.bin");
    }
    std::ofstream out(curve_path, std::ios::app);
    while (!pending.empty() && pending.begin()->first == next_row) {
      out << format_curve_row(pending.begin()->second) << '\n';
      curve.push_back(pending.begin()->second);
      pending.erase(pending.begin());
      next_row += config.eval_interval;
    }
    out.flush();
    save_params(snap, dir / "latest.bin");
    store.save_optimizer(dir / "optimizer.bin");
    nlohmann::json state{{"global_step", reached}, {"best_mean_dist", best_dist}};
    write_text(state_path, state.dump(2) + "\n");
    if (options.log_progress) {
      std::clog << "[train] step " << thresholds.back() << " mean_dist " << base.mean_dist
                << " min " << base.min_dist << " max " << base.max_dist << " reward "
                << base.mean_reward << '\n';
    }
  };

  WorkerHooks hooks;
  hooks.on_eval = on_eval;
  TrainResult result;
  result.workers.resize(static_cast<std::size_t>(config.workers));
  if (config.workers == 1) {
    result.workers[0] = worker_loop(0, store, config, env_config, hooks);
  } else {
    std::vector<std::jthread> threads;
    for (int w = 0; w < config.workers; ++w) {
      threads.emplace_back([&, w] {
        result.workers[static_cast<std::size_t>(w)] = worker_loop(w, store, config, env_config, hooks);
      });
    }
  }

  result.final_params = store.snapshot();
  result.global_steps = store.global_step();
  save_params(result.final_params, dir / "final.bin");
  result.curve = std::move(curve);
  return result;
}

}  // namespace reachlab
