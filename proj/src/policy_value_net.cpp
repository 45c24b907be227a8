#include "reachlab/policy_value_net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Core>

namespace reachlab {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapCMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapVec = Eigen::Map<Vec<T>>;
template <typename T>
using MapCVec = Eigen::Map<const Vec<T>>;

constexpr int kPix = kFrameWidth * kFrameHeight;
constexpr int kCol1Rows = kInputChannels * kConv1Kernel * kConv1Kernel;   // 27
constexpr int kCol1Cols = kConv1Out * kConv1Out;                           // 256
constexpr int kCol2Rows = kConv1Channels * kConv2Kernel * kConv2Kernel;   // 400
constexpr int kCol2Cols = kConv2Out * kConv2Out;                           // 36
constexpr int kGates = 4 * kHidden;

constexpr char kMagic[8] = {'R', 'E', 'A', 'C', 'H', 'N', 'E', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
MapCMat<T> as_mat(const BasicParams<T>& p, Layer l, int head = -1) {
  const auto& t = p.layout.find(l, head);
  return MapCMat<T>(p.data.data() + t.offset, t.rows, t.cols);
}

template <typename T>
MapMat<T> as_mat(BasicParams<T>& p, Layer l, int head = -1) {
  const auto& t = p.layout.find(l, head);
  return MapMat<T>(p.data.data() + t.offset, t.rows, t.cols);
}

template <typename T>
MapCVec<T> as_vec(const BasicParams<T>& p, Layer l, int head = -1) {
  const auto& t = p.layout.find(l, head);
  return MapCVec<T>(p.data.data() + t.offset, static_cast<Eigen::Index>(t.size()));
}

template <typename T>
MapVec<T> as_vec(BasicParams<T>& p, Layer l, int head = -1) {
  const auto& t = p.layout.find(l, head);
  return MapVec<T>(p.data.data() + t.offset, static_cast<Eigen::Index>(t.size()));
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
std::uint64_t hash_bytes(const std::vector<T>& data) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  const std::size_t n = data.size() * sizeof(T);
  std::uint64_t h = 0xcbf29ce484222325ULL ^ n;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    std::uint64_t w;
    std::memcpy(&w, bytes + i, 8);
    h = (h ^ w) * 0x100000001b3ULL;
    h ^= h >> 29;
  }
  for (; i < n; ++i) h = (h ^ bytes[i]) * 0x100000001b3ULL;
  return h;
}

void ensure_cache(auto& c, int actions) {
  c.input.resize(kInputChannels * kPix);
  c.col1.resize(kCol1Rows * kCol1Cols);
  c.act1.resize(kConv1Channels * kCol1Cols);
  c.col2.resize(kCol2Rows * kCol2Cols);
  c.act2.resize(kFlatten);
  c.fc.resize(kHidden);
  c.gates.resize(kGates);
  c.tanh_cell.resize(kHidden);
  c.probs.resize(static_cast<std::size_t>(kNumHeads * actions));
  c.log_probs.resize(static_cast<std::size_t>(kNumHeads * actions));
}

}  // namespace

ParamLayout::ParamLayout(int actions_per_joint) : actions_(actions_per_joint) {
  if (actions_per_joint < 1) throw std::invalid_argument("actions per joint must be >= 1");
  auto add = [&](std::string name, Layer layer, int head, int rows, int cols) {
    tensors_.push_back({std::move(name), layer, head, rows, cols, total_});
    total_ += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  };
  add("conv1.weight", Layer::Conv1W, -1, kConv1Channels, kCol1Rows);
  add("conv1.bias", Layer::Conv1B, -1, kConv1Channels, 1);
  add("conv2.weight", Layer::Conv2W, -1, kConv2Channels, kCol2Rows);
  add("conv2.bias", Layer::Conv2B, -1, kConv2Channels, 1);
  add("fc.weight", Layer::FcW, -1, kHidden, kFlatten);
  add("fc.bias", Layer::FcB, -1, kHidden, 1);
  add("lstm.weight_x", Layer::LstmWx, -1, kGates, kHidden);
  add("lstm.weight_h", Layer::LstmWh, -1, kGates, kHidden);
  add("lstm.bias", Layer::LstmB, -1, kGates, 1);
  for (int j = 0; j < kNumHeads; ++j) {
    add("policy" + std::to_string(j) + ".weight", Layer::HeadW, j, actions_per_joint, kHidden);
    add("policy" + std::to_string(j) + ".bias", Layer::HeadB, j, actions_per_joint, 1);
  }
  add("value.weight", Layer::ValueW, -1, 1, kHidden);
  add("value.bias", Layer::ValueB, -1, 1, 1);
}

const TensorInfo& ParamLayout::find(Layer layer, int head) const {
  for (const auto& t : tensors_)
    if (t.layer == layer && t.head == head) return t;
  throw std::out_of_range("no tensor for requested layer/head");
}

std::uint64_t params_hash(const NetParams& p) { return hash_bytes(p.data); }
std::uint64_t params_hash(const BasicParams<double>& p) { return hash_bytes(p.data); }

NetParams init_params(Rng& rng, int actions_per_joint, InitMode mode) {
  NetParams p(actions_per_joint);
  if (mode == InitMode::Zero) return p;
  for (const auto& t : p.layout.tensors()) {
    const bool is_weight = t.cols > 1 || t.layer == Layer::HeadW || t.layer == Layer::ValueW;
    if (!is_weight) continue;
    // He-style bound for rectified layers, plain 1/sqrt(fan_in) for the
    // recurrent gates, and a small bound on the output heads so the initial
    // policy starts close to uniform.
    double bound = std::sqrt(6.0 / t.cols);
    if (t.layer == Layer::LstmWx || t.layer == Layer::LstmWh) bound = 1.0 / std::sqrt(t.cols);
    if (t.layer == Layer::HeadW || t.layer == Layer::ValueW) bound = 0.1 / std::sqrt(t.cols);
    for (std::size_t i = 0; i < t.size(); ++i)
      p.data[t.offset + i] = static_cast<float>(rng.uniform(-bound, bound));
  }
  return p;
}

template <typename T>
void frame_to_input(const FrameRGB& frame, std::vector<T>& out) {
  out.resize(kInputChannels * kPix);
  for (int p = 0; p < kPix; ++p)
    for (int c = 0; c < kInputChannels; ++c)
      out[c * kPix + p] = static_cast<T>(frame.data[p * kInputChannels + c]) / T(255);
}

template <typename T>
void forward(const BasicParams<T>& params, std::span<const T> input, const LstmState<T>& state,
             StepCache<T>& c) {
  if (input.size() != static_cast<std::size_t>(kInputChannels * kPix))
    throw std::invalid_argument("network input must be 3x64x64 (got " +
                                std::to_string(input.size()) + " values)");
  const int K = params.actions_per_joint();
  ensure_cache(c, K);
  if (input.data() != c.input.data()) std::copy(input.begin(), input.end(), c.input.begin());
  c.prev = state;

  // conv1 via im2col.
  for (int ch = 0; ch < kInputChannels; ++ch)
    for (int ky = 0; ky < kConv1Kernel; ++ky)
      for (int kx = 0; kx < kConv1Kernel; ++kx) {
        const int row = (ch * kConv1Kernel + ky) * kConv1Kernel + kx;
        T* dst = c.col1.data() + row * kCol1Cols;
        const T* src = c.input.data() + ch * kPix;
        for (int oy = 0; oy < kConv1Out; ++oy)
          for (int ox = 0; ox < kConv1Out; ++ox)
            dst[oy * kConv1Out + ox] =
                src[(oy * kConv1Stride + ky) * kFrameWidth + ox * kConv1Stride + kx];
      }
  MapMat<T> act1(c.act1.data(), kConv1Channels, kCol1Cols);
  act1.noalias() = as_mat(params, Layer::Conv1W) * MapCMat<T>(c.col1.data(), kCol1Rows, kCol1Cols);
  act1.colwise() += as_vec(params, Layer::Conv1B);
  act1 = act1.cwiseMax(T(0));

  // conv2 via im2col.
  for (int ch = 0; ch < kConv1Channels; ++ch)
    for (int ky = 0; ky < kConv2Kernel; ++ky)
      for (int kx = 0; kx < kConv2Kernel; ++kx) {
        const int row = (ch * kConv2Kernel + ky) * kConv2Kernel + kx;
        T* dst = c.col2.data() + row * kCol2Cols;
        const T* src = c.act1.data() + ch * kCol1Cols;
        for (int oy = 0; oy < kConv2Out; ++oy)
          for (int ox = 0; ox < kConv2Out; ++ox)
            dst[oy * kConv2Out + ox] =
                src[(oy * kConv2Stride + ky) * kConv1Out + ox * kConv2Stride + kx];
      }
  MapMat<T> act2(c.act2.data(), kConv2Channels, kCol2Cols);
  act2.noalias() = as_mat(params, Layer::Conv2W) * MapCMat<T>(c.col2.data(), kCol2Rows, kCol2Cols);
  act2.colwise() += as_vec(params, Layer::Conv2B);
  act2 = act2.cwiseMax(T(0));

  MapVec<T> fc(c.fc.data(), kHidden);
  fc.noalias() = as_mat(params, Layer::FcW) * MapCVec<T>(c.act2.data(), kFlatten);
  fc += as_vec(params, Layer::FcB);
  fc = fc.cwiseMax(T(0));

  MapVec<T> z(c.gates.data(), kGates);
  z.noalias() = as_mat(params, Layer::LstmWx) * fc;
  z.noalias() += as_mat(params, Layer::LstmWh) * MapCVec<T>(state.hidden.data(), kHidden);
  z += as_vec(params, Layer::LstmB);
  for (int k = 0; k < kHidden; ++k) {
    const T i = sigmoid(z[k]);
    const T f = sigmoid(z[kHidden + k]);
    const T g = std::tanh(z[2 * kHidden + k]);
    const T o = sigmoid(z[3 * kHidden + k]);
    z[k] = i;
    z[kHidden + k] = f;
    z[2 * kHidden + k] = g;
    z[3 * kHidden + k] = o;
    const T cell = f * state.cell[k] + i * g;
    const T tc = std::tanh(cell);
    c.next.cell[k] = cell;
    c.tanh_cell[k] = tc;
    c.next.hidden[k] = o * tc;
  }

  MapCVec<T> h(c.next.hidden.data(), kHidden);
  for (int j = 0; j < kNumHeads; ++j) {
    MapVec<T> logits(c.log_probs.data() + j * K, K);
    logits.noalias() = as_mat(params, Layer::HeadW, j) * h;
    logits += as_vec(params, Layer::HeadB, j);
    const T mx = logits.maxCoeff();
    const T lse = mx + std::log((logits.array() - mx).exp().sum());
    logits.array() -= lse;
    MapVec<T>(c.probs.data() + j * K, K) = logits.array().exp();
  }
  c.value = as_mat(params, Layer::ValueW).row(0).dot(h) + as_vec(params, Layer::ValueB)[0];
}

template <typename T>
void forward(const BasicParams<T>& params, const FrameRGB& frame, const LstmState<T>& state,
             StepCache<T>& cache) {
  frame_to_input(frame, cache.input);
  forward(params, std::span<const T>(cache.input), state, cache);
}

template <typename T>
LossBreakdown trajectory_loss(const BasicTrajectory<T>& traj, const LossTargets& targets,
                              const LossSpec& spec) {
  if (targets.returns.size() != traj.steps.size() || targets.advantages.size() != traj.steps.size())
    throw std::invalid_argument("loss targets are not aligned with the trajectory");
  LossBreakdown out;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const auto& step = traj.steps[t];
    const int K = static_cast<int>(step.cache.probs.size()) / kNumHeads;
    for (int j = 0; j < kNumHeads; ++j) {
      const T* lp = step.cache.log_probs.data() + j * K;
      const T* p = step.cache.probs.data() + j * K;
      out.policy -= targets.advantages[t] * static_cast<double>(lp[step.actions[j]]);
      for (int k = 0; k < K; ++k) out.entropy -= static_cast<double>(p[k] * lp[k]);
    }
    const double err = targets.returns[t] - static_cast<double>(step.cache.value);
    out.value += err * err;
  }
  out.total = out.policy + spec.value_weight * out.value - spec.entropy_weight * out.entropy;
  return out;
}

template <typename T>
void recompute_caches(const BasicParams<T>& params, BasicTrajectory<T>& traj) {
  LstmState<T> state = traj.initial_state;
  for (auto& step : traj.steps) {
    forward(params, step.frame, state, step.cache);
    state = step.cache.next;
  }
  traj.params_hash = params_hash(params);
}

template <typename T>
void backward(const BasicParams<T>& params, const BasicTrajectory<T>& traj,
              const LossTargets& targets, const LossSpec& spec, BasicParams<T>& grads) {
  if (traj.params_hash != params_hash(params))
    throw std::logic_error("trajectory caches were produced by different parameters");
  if (!(grads.layout == params.layout)) throw std::invalid_argument("gradient layout mismatch");
  if (targets.returns.size() != traj.steps.size() || targets.advantages.size() != traj.steps.size())
    throw std::invalid_argument("loss targets are not aligned with the trajectory");
  const int K = params.actions_per_joint();

  Vec<T> dh_next = Vec<T>::Zero(kHidden);
  Vec<T> dc_next = Vec<T>::Zero(kHidden);
  Vec<T> dlogits(K), dh(kHidden), dz(kGates), dfc(kHidden), dflat(kFlatten);
  RowMat<T> dcol2(kCol2Rows, kCol2Cols), dact1(kConv1Channels, kCol1Cols);

  auto gW1 = as_mat(grads, Layer::Conv1W);
  auto gb1 = as_vec(grads, Layer::Conv1B);
  auto gW2 = as_mat(grads, Layer::Conv2W);
  auto gb2 = as_vec(grads, Layer::Conv2B);
  auto gWfc = as_mat(grads, Layer::FcW);
  auto gbfc = as_vec(grads, Layer::FcB);
  auto gWx = as_mat(grads, Layer::LstmWx);
  auto gWh = as_mat(grads, Layer::LstmWh);
  auto gbl = as_vec(grads, Layer::LstmB);
  auto gWv = as_mat(grads, Layer::ValueW);
  auto gbv = as_vec(grads, Layer::ValueB);

  for (std::size_t ti = traj.steps.size(); ti-- > 0;) {
    const auto& step = traj.steps[ti];
    const auto& c = step.cache;
    if (c.probs.size() != static_cast<std::size_t>(kNumHeads * K))
      throw std::logic_error("trajectory step is missing its forward cache");
    const T adv = static_cast<T>(targets.advantages[ti]);
    const T ce = static_cast<T>(spec.entropy_weight);
    MapCVec<T> h(c.next.hidden.data(), kHidden);

    dh = dh_next;
    for (int j = 0; j < kNumHeads; ++j) {
      const T* p = c.probs.data() + j * K;
      const T* lp = c.log_probs.data() + j * K;
      T entropy = 0;
      for (int k = 0; k < K; ++k) entropy -= p[k] * lp[k];
      for (int k = 0; k < K; ++k)
        dlogits[k] = adv * (p[k] - (k == step.actions[j] ? T(1) : T(0))) +
                     ce * p[k] * (lp[k] + entropy);
      as_mat(grads, Layer::HeadW, j).noalias() += dlogits * h.transpose();
      as_vec(grads, Layer::HeadB, j) += dlogits;
      dh.noalias() += as_mat(params, Layer::HeadW, j).transpose() * dlogits;
    }
    const T dv = T(2) * static_cast<T>(spec.value_weight) *
                 (c.value - static_cast<T>(targets.returns[ti]));
    gWv.row(0) += dv * h.transpose();
    gbv[0] += dv;
    dh += dv * as_mat(params, Layer::ValueW).row(0).transpose();

    // LSTM cell.
    const T* g = c.gates.data();
    for (int k = 0; k < kHidden; ++k) {
      const T i = g[k], f = g[kHidden + k], gg = g[2 * kHidden + k], o = g[3 * kHidden + k];
      const T tc = c.tanh_cell[k];
      const T dcell = dh[k] * o * (T(1) - tc * tc) + dc_next[k];
      dz[k] = dcell * gg * i * (T(1) - i);
      dz[kHidden + k] = dcell * c.prev.cell[k] * f * (T(1) - f);
      dz[2 * kHidden + k] = dcell * i * (T(1) - gg * gg);
      dz[3 * kHidden + k] = dh[k] * tc * o * (T(1) - o);
      dc_next[k] = dcell * f;
    }
    MapCVec<T> fc(c.fc.data(), kHidden);
    MapCVec<T> hprev(c.prev.hidden.data(), kHidden);
    gWx.noalias() += dz * fc.transpose();
    gWh.noalias() += dz * hprev.transpose();
    gbl += dz;
    dh_next.noalias() = as_mat(params, Layer::LstmWh).transpose() * dz;
    dfc.noalias() = as_mat(params, Layer::LstmWx).transpose() * dz;

    // Fully connected.
    for (int k = 0; k < kHidden; ++k)
      if (!(c.fc[k] > T(0))) dfc[k] = T(0);
    MapCVec<T> flat(c.act2.data(), kFlatten);
    gWfc.noalias() += dfc * flat.transpose();
    gbfc += dfc;
    dflat.noalias() = as_mat(params, Layer::FcW).transpose() * dfc;

    // conv2.
    for (int k = 0; k < kFlatten; ++k)
      if (!(c.act2[k] > T(0))) dflat[k] = T(0);
    Eigen::Map<const RowMat<T>> dpre2(dflat.data(), kConv2Channels, kCol2Cols);
    MapCMat<T> col2(c.col2.data(), kCol2Rows, kCol2Cols);
    gW2.noalias() += dpre2 * col2.transpose();
    gb2 += dpre2.rowwise().sum();
    dcol2.noalias() = as_mat(params, Layer::Conv2W).transpose() * dpre2;

    dact1.setZero();
    for (int ch = 0; ch < kConv1Channels; ++ch)
      for (int ky = 0; ky < kConv2Kernel; ++ky)
        for (int kx = 0; kx < kConv2Kernel; ++kx) {
          const int row = (ch * kConv2Kernel + ky) * kConv2Kernel + kx;
          const T* src = dcol2.data() + row * kCol2Cols;
          T* dst = dact1.data() + ch * kCol1Cols;
          for (int oy = 0; oy < kConv2Out; ++oy)
            for (int ox = 0; ox < kConv2Out; ++ox)
              dst[(oy * kConv2Stride + ky) * kConv1Out + ox * kConv2Stride + kx] +=
                  src[oy * kConv2Out + ox];
        }

    // conv1 (no gradient needed w.r.t. the image).
    for (int k = 0; k < kConv1Channels * kCol1Cols; ++k)
      if (!(c.act1[k] > T(0))) dact1.data()[k] = T(0);
    MapCMat<T> col1(c.col1.data(), kCol1Rows, kCol1Cols);
    gW1.noalias() += dact1 * col1.transpose();
    gb1 += dact1.rowwise().sum();
  }
}

void save_params(const NetParams& params, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    out.write(kMagic, sizeof kMagic);
    put32(kFormatVersion);
    put32(static_cast<std::uint32_t>(params.actions_per_joint()));
    put32(static_cast<std::uint32_t>(params.layout.tensors().size()));
    for (const auto& t : params.layout.tensors()) {
      put32(static_cast<std::uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      put32(static_cast<std::uint32_t>(t.rows));
      put32(static_cast<std::uint32_t>(t.cols));
    }
    out.write(reinterpret_cast<const char*>(params.data.data()),
              static_cast<std::streamsize>(params.data.size() * sizeof(float)));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

NetParams load_params(const std::filesystem::path& path, int expected_actions) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weight file " + path.string());
  const std::string where = path.string() + ": ";
  auto get32 = [&]() {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4)) throw std::runtime_error(where + "truncated header");
    return v;
  };
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(where + "not a weight file (bad magic)");
  const auto version = get32();
  if (version != kFormatVersion)
    throw std::runtime_error(where + "unsupported format version " + std::to_string(version) +
                             " (expected " + std::to_string(kFormatVersion) + ")");
  const auto actions = static_cast<int>(get32());
  if (expected_actions > 0 && actions != expected_actions)
    throw std::runtime_error(where + "policy heads have " + std::to_string(actions) +
                             " actions but the run expects " + std::to_string(expected_actions));
  if (actions < 1 || actions > 4096) throw std::runtime_error(where + "corrupt action count");
  NetParams params(actions);
  const auto count = get32();
  if (count != params.layout.tensors().size())
    throw std::runtime_error(where + "tensor count " + std::to_string(count) + " does not match " +
                             std::to_string(params.layout.tensors().size()));
  for (const auto& t : params.layout.tensors()) {
    const auto len = get32();
    if (len > 256) throw std::runtime_error(where + "corrupt tensor name");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw std::runtime_error(where + "truncated shape table");
    const auto rows = static_cast<int>(get32());
    const auto cols = static_cast<int>(get32());
    if (name != t.name || rows != t.rows || cols != t.cols) {
      std::ostringstream msg;
      msg << where << "shape mismatch for " << t.name << ": file has " << name << " [" << rows
          << "x" << cols << "], expected [" << t.rows << "x" << t.cols << "]";
      throw std::runtime_error(msg.str());
    }
  }
  if (!in.read(reinterpret_cast<char*>(params.data.data()),
               static_cast<std::streamsize>(params.data.size() * sizeof(float))))
    throw std::runtime_error(where + "truncated parameter data");
  if (in.peek() != std::char_traits<char>::eof())
    throw std::runtime_error(where + "trailing bytes after parameter data");
  return params;
}

#define REACHLAB_INSTANTIATE(T)                                                               \
  template void frame_to_input<T>(const FrameRGB&, std::vector<T>&);                           \
  template void forward<T>(const BasicParams<T>&, std::span<const T>, const LstmState<T>&,     \
                           StepCache<T>&);                                                     \
  template void forward<T>(const BasicParams<T>&, const FrameRGB&, const LstmState<T>&,        \
                           StepCache<T>&);                                                     \
  template LossBreakdown trajectory_loss<T>(const BasicTrajectory<T>&, const LossTargets&,     \
                                            const LossSpec&);                                  \
  template void recompute_caches<T>(const BasicParams<T>&, BasicTrajectory<T>&);              \
  template void backward<T>(const BasicParams<T>&, const BasicTrajectory<T>&,                  \
                            const LossTargets&, const LossSpec&, BasicParams<T>&);

REACHLAB_INSTANTIATE(float)
REACHLAB_INSTANTIATE(double)

#undef REACHLAB_INSTANTIATE

}  // namespace reachlab
