#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "reachlab/random.hpp"
#include "reachlab/scene_renderer.hpp"

namespace reachlab {

// Layer sizes. conv1: 3x3 stride 4 -> 16x16, conv2: 5x5 stride 2 -> 6x6, 32 channels.
inline constexpr int kInputChannels = 3;
inline constexpr int kConv1Channels = 16;
inline constexpr int kConv1Kernel = 3;
inline constexpr int kConv1Stride = 4;
inline constexpr int kConv2Channels = 32;
inline constexpr int kConv2Kernel = 5;
inline constexpr int kConv2Stride = 2;
inline constexpr int conv_out(int in, int kernel, int stride) { return (in - kernel) / stride + 1; }
inline constexpr int kConv1Out = conv_out(kFrameWidth, kConv1Kernel, kConv1Stride);
inline constexpr int kConv2Out = conv_out(kConv1Out, kConv2Kernel, kConv2Stride);
inline constexpr int kFlatten = kConv2Channels * kConv2Out * kConv2Out;
inline constexpr int kHidden = 128;
inline constexpr int kNumHeads = 6;

static_assert(kConv1Out == 16 && kConv2Out == 6 && kFlatten == 1152);

/// Named tensors, in storage order. Head tensors repeat per joint.
enum class Layer {
  Conv1W, Conv1B, Conv2W, Conv2B, FcW, FcB, LstmWx, LstmWh, LstmB, HeadW, HeadB, ValueW, ValueB,
};

struct TensorInfo {
  std::string name;
  Layer layer;
  int head;  // -1 unless a policy head tensor
  int rows;
  int cols;
  std::size_t offset;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Shape table for a network with `actions_per_joint` outputs per head.
class ParamLayout {
 public:
  explicit ParamLayout(int actions_per_joint);

  int actions_per_joint() const { return actions_; }
  std::size_t total() const { return total_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& find(Layer layer, int head = -1) const;

  bool operator==(const ParamLayout& o) const { return actions_ == o.actions_; }

 private:
  int actions_;
  std::size_t total_ = 0;
  std::vector<TensorInfo> tensors_;
};

/// Flat parameter (or gradient) storage. Row-major matrices, rows = outputs.
template <typename T>
struct BasicParams {
  ParamLayout layout{1};
  std::vector<T> data;

  BasicParams() = default;
  explicit BasicParams(int actions_per_joint)
      : layout(actions_per_joint), data(layout.total(), T(0)) {}

  int actions_per_joint() const { return layout.actions_per_joint(); }
  std::span<T> tensor(Layer layer, int head = -1) {
    const auto& t = layout.find(layer, head);
    return {data.data() + t.offset, t.size()};
  }
  std::span<const T> tensor(Layer layer, int head = -1) const {
    const auto& t = layout.find(layer, head);
    return {data.data() + t.offset, t.size()};
  }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  template <typename U>
  BasicParams<U> cast() const {
    BasicParams<U> out(actions_per_joint());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using NetParams = BasicParams<float>;
using Gradients = BasicParams<float>;

std::uint64_t params_hash(const NetParams& p);
std::uint64_t params_hash(const BasicParams<double>& p);

enum class InitMode { FanIn, Zero };

/// Fan-in scaled uniform weights, zero biases. Deterministic per seed.
NetParams init_params(Rng& rng, int actions_per_joint, InitMode mode = InitMode::FanIn);

template <typename T>
struct LstmState {
  std::array<T, kHidden> hidden{};
  std::array<T, kHidden> cell{};
  bool operator==(const LstmState&) const = default;
};

/// Intermediate activations of one forward step; reused as a workspace.
template <typename T>
struct StepCache {
  std::vector<T> input;    // CHW, 3 x 64 x 64, in [0, 1]
  std::vector<T> col1;     // 27 x 256
  std::vector<T> act1;     // 16 x 256, post-ReLU
  std::vector<T> col2;     // 400 x 36
  std::vector<T> act2;     // 1152, post-ReLU
  std::vector<T> fc;       // 128, post-ReLU
  std::vector<T> gates;    // 512: i, f, g, o after nonlinearity
  LstmState<T> prev;
  LstmState<T> next;
  std::vector<T> tanh_cell;
  std::vector<T> probs;    // 6 x K
  std::vector<T> log_probs;
  T value = T(0);
};

/// Converts a frame to the CHW network input (bytes / 255).
template <typename T>
void frame_to_input(const FrameRGB& frame, std::vector<T>& out);

/// One recurrent step. Fills `cache` with every activation needed by backward.
/// Throws std::invalid_argument for an input of the wrong size.
template <typename T>
void forward(const BasicParams<T>& params, std::span<const T> input, const LstmState<T>& state,
             StepCache<T>& cache);

/// Convenience overload taking a frame.
template <typename T>
void forward(const BasicParams<T>& params, const FrameRGB& frame, const LstmState<T>& state,
             StepCache<T>& cache);

template <typename T>
struct TrajectoryStep {
  FrameRGB frame;
  std::array<int, kNumHeads> actions{};
  double reward = 0.0;
  bool done = false;
  StepCache<T> cache;  // forward state at collection time
};

/// A rollout segment of at most n steps, starting from `initial_state`.
template <typename T>
struct BasicTrajectory {
  LstmState<T> initial_state;
  std::vector<TrajectoryStep<T>> steps;
  std::uint64_t params_hash = 0;
};

using Trajectory = BasicTrajectory<float>;

struct LossSpec {
  double value_weight = 0.5;
  double entropy_weight = 0.01;
};

/// Per-step regression targets. Advantages are constants for the policy term.
struct LossTargets {
  std::vector<double> returns;
  std::vector<double> advantages;
};

struct LossBreakdown {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

/// Composite loss evaluated from the cached forward outputs of a trajectory.
template <typename T>
LossBreakdown trajectory_loss(const BasicTrajectory<T>& traj, const LossTargets& targets,
                              const LossSpec& spec);

/// Exact gradients of the composite loss with backpropagation through time
/// over the trajectory. Accumulates into `grads` (same layout as params).
/// Throws std::logic_error when the trajectory was collected with other params.
template <typename T>
void backward(const BasicParams<T>& params, const BasicTrajectory<T>& traj,
              const LossTargets& targets, const LossSpec& spec, BasicParams<T>& grads);

/// Re-runs the forward pass over the trajectory's frames from its initial
/// state and refreshes every cache (used when caches are absent or stale).
template <typename T>
void recompute_caches(const BasicParams<T>& params, BasicTrajectory<T>& traj);

/// Binary weight file: magic, version, actions per joint, shape table, data.
void save_params(const NetParams& params, const std::filesystem::path& path);

/// Throws std::runtime_error with a diagnostic on bad magic, version, shape
/// mismatch against `expected_actions` (when > 0), or truncation.
NetParams load_params(const std::filesystem::path& path, int expected_actions = 0);

}  // namespace reachlab
