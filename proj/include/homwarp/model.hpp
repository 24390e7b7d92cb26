#pragma once

// The homography regression network: eight 3x3 same-padded convolutions with
// ReLU, 2x2/2 max pooling after every second convolution, global average
// pooling, FC + ReLU + inverted dropout, and a linear FC head producing the
// eight free elements of the normalized homography.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "homwarp/error.hpp"
#include "homwarp/geometry.hpp"
#include "homwarp/image.hpp"
#include "homwarp/warp.hpp"

namespace homwarp {

inline constexpr int kConvLayers = 8;
inline constexpr int kOutputs = 8;

struct RegressorConfig {
  int input_side = 128;
  int channels = 2;
  std::array<int, kConvLayers> filters{64, 64, 64, 64, 128, 128, 128, 128};
  int fc1_units = 1024;
  double dropout = 0.5;
  int outputs = kOutputs;

  static RegressorConfig paper() { return {}; }

  static RegressorConfig desk() {
    RegressorConfig c;
    c.input_side = 32;
    c.filters = {4, 4, 4, 4, 8, 8, 8, 8};
    c.fc1_units = 64;
    c.dropout = 0.0;
    return c;
  }

  /// Spatial side length seen by conv layer `layer`.
  [[nodiscard]] int side_at(int layer) const noexcept { return input_side >> (layer / 2); }

  void validate() const {
    if (input_side < 16 || input_side % 16 != 0) {
      throw Error(ErrorKind::ShapeMismatch, "input side must be a positive multiple of 16");
    }
    if (channels != 2 || outputs != kOutputs) throw Error(ErrorKind::ShapeMismatch, "expected 2 input channels and 8 outputs");
    for (int f : filters)
      if (f <= 0) throw Error(ErrorKind::ShapeMismatch, "filter counts must be positive");
    if (fc1_units <= 0) throw Error(ErrorKind::ShapeMismatch, "fc1 must have units");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorKind::ShapeMismatch, "dropout must lie in [0, 1)");
  }

  friend bool operator==(const RegressorConfig&, const RegressorConfig&) = default;
};

/// Channel-major (C, H, W) activation tensor.
template <typename T>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, T(0)) {}

  [[nodiscard]] std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  [[nodiscard]] T* channel(int c) noexcept { return data.data() + c * plane(); }
  [[nodiscard]] const T* channel(int c) const noexcept { return data.data() + c * plane(); }
};

/// Channel 0 = patch_a, channel 1 = patch_b.
template <typename T>
Tensor<T> stack_pair(const BasicPatch<T>& patch_a, const BasicPatch<T>& patch_b) {
  if (!same_dims(patch_a, patch_b)) throw Error(ErrorKind::DimensionMismatch, "stack_pair needs equal dimensions");
  Tensor<T> t(2, patch_a.height, patch_a.width);
  std::copy(patch_a.data.begin(), patch_a.data.end(), t.channel(0));
  std::copy(patch_b.data.begin(), patch_b.data.end(), t.channel(1));
  return t;
}

template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  std::vector<T> velocity;

  ParamTensor(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    value.assign(count, T(0));
    grad.assign(count, T(0));
    velocity.assign(count, T(0));
  }

  [[nodiscard]] std::size_t size() const noexcept { return value.size(); }
};

/// All trainable tensors in declaration order:
/// conv0.w, conv0.b, ..., conv7.w, conv7.b, fc1.w, fc1.b, fc2.w, fc2.b.
template <typename T>
struct RegressorParams {
  RegressorConfig config;
  std::vector<ParamTensor<T>> tensors;
  std::uint64_t version = 0;  // bumped on every in-place update

  explicit RegressorParams(const RegressorConfig& cfg) : config(cfg) {
    cfg.validate();
    int in_c = cfg.channels;
    for (int i = 0; i < kConvLayers; ++i) {
      const int out_c = cfg.filters[i];
      tensors.emplace_back("conv" + std::to_string(i) + ".w", std::vector<int>{out_c, in_c, 3, 3});
      tensors.emplace_back("conv" + std::to_string(i) + ".b", std::vector<int>{out_c});
      in_c = out_c;
    }
    tensors.emplace_back("fc1.w", std::vector<int>{cfg.fc1_units, in_c});
    tensors.emplace_back("fc1.b", std::vector<int>{cfg.fc1_units});
    tensors.emplace_back("fc2.w", std::vector<int>{cfg.outputs, cfg.fc1_units});
    tensors.emplace_back("fc2.b", std::vector<int>{cfg.outputs});
  }

  ParamTensor<T>& conv_w(int i) { return tensors[2 * i]; }
  ParamTensor<T>& conv_b(int i) { return tensors[2 * i + 1]; }
  ParamTensor<T>& fc1_w() { return tensors[2 * kConvLayers]; }
  ParamTensor<T>& fc1_b() { return tensors[2 * kConvLayers + 1]; }
  ParamTensor<T>& fc2_w() { return tensors[2 * kConvLayers + 2]; }
  ParamTensor<T>& fc2_b() { return tensors[2 * kConvLayers + 3]; }
  const ParamTensor<T>& conv_w(int i) const { return tensors[2 * i]; }
  const ParamTensor<T>& conv_b(int i) const { return tensors[2 * i + 1]; }
  const ParamTensor<T>& fc1_w() const { return tensors[2 * kConvLayers]; }
  const ParamTensor<T>& fc1_b() const { return tensors[2 * kConvLayers + 1]; }
  const ParamTensor<T>& fc2_w() const { return tensors[2 * kConvLayers + 2]; }
  const ParamTensor<T>& fc2_b() const { return tensors[2 * kConvLayers + 3]; }

  [[nodiscard]] std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& t : tensors) std::fill(t.grad.begin(), t.grad.end(), T(0));
  }

  template <typename U>
  [[nodiscard]] RegressorParams<U> cast() const {
    RegressorParams<U> out(config);
    for (std::size_t k = 0; k < tensors.size(); ++k)
      for (std::size_t i = 0; i < tensors[k].size(); ++i) {
        out.tensors[k].value[i] = static_cast<U>(tensors[k].value[i]);
        out.tensors[k].velocity[i] = static_cast<U>(tensors[k].velocity[i]);
      }
    return out;
  }
};

/// Gradient storage laid out like RegressorParams::tensors.
template <typename T>
struct Gradients {
  std::vector<std::vector<T>> tensors;

  Gradients() = default;
  explicit Gradients(const RegressorParams<T>& p) {
    for (const auto& t : p.tensors) tensors.emplace_back(t.size(), T(0));
  }

  void zero() {
    for (auto& t : tensors) std::fill(t.begin(), t.end(), T(0));
  }

  void add(const Gradients& other) {
    for (std::size_t k = 0; k < tensors.size(); ++k)
      for (std::size_t i = 0; i < tensors[k].size(); ++i) tensors[k][i] += other.tensors[k][i];
  }
};

/// Eight free elements (h11, h12, h13, h21, h22, h23, h31, h32); h33 == 1.
template <typename T>
using PredictionHead = std::array<T, kOutputs>;

template <typename T>
Homography3 to_homography(const PredictionHead<T>& p) {
  std::array<double, 8> h{};
  for (int i = 0; i < 8; ++i) h[i] = static_cast<double>(p[i]);
  return Homography3::from_free(h, Frame::Normalized);
}

template <typename T>
PredictionHead<T> to_head(const Homography3& h) {
  PredictionHead<T> out{};
  for (int i = 0; i < 8; ++i) out[i] = static_cast<T>(h[i]);
  return out;
}

enum class Mode { Train, Eval };

template <typename T>
struct ForwardCache {
  bool valid = false;
  std::uint64_t params_version = 0;
  std::array<Tensor<T>, kConvLayers> conv_in;
  std::array<Tensor<T>, kConvLayers> conv_out;  // after ReLU, before pooling
  std::array<std::vector<std::uint32_t>, kConvLayers> pool_argmax;
  std::vector<T> gap;
  std::vector<T> fc1_act;  // after ReLU
  std::vector<T> dropout_scale;
  std::vector<T> fc1_dropped;
  PredictionHead<T> output{};
};

namespace detail {

template <typename T>
void conv3x3_forward(const Tensor<T>& in, const std::vector<T>& w, const std::vector<T>& b, Tensor<T>& out) {
  const int H = in.height, W = in.width;
  for (int o = 0; o < out.channels; ++o) {
    T* dst = out.channel(o);
    std::fill(dst, dst + out.plane(), b[o]);
    for (int c = 0; c < in.channels; ++c) {
      const T* src = in.channel(c);
      const T* k = w.data() + (static_cast<std::size_t>(o) * in.channels + c) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const T wk = k[ky * 3 + kx];
          const int dy = ky - 1, dx = kx - 1;
          const int y_lo = std::max(0, -dy), y_hi = std::min(H, H - dy);
          const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
          for (int y = y_lo; y < y_hi; ++y) {
            T* row = dst + static_cast<std::size_t>(y) * W;
            const T* srow = src + static_cast<std::size_t>(y + dy) * W + dx;
            for (int x = x_lo; x < x_hi; ++x) row[x] += wk * srow[x];
          }
        }
      }
    }
  }
}

template <typename T>
void conv3x3_backward(const Tensor<T>& in, const std::vector<T>& w, const Tensor<T>& grad_out,
                      std::vector<T>& grad_w, std::vector<T>& grad_b, Tensor<T>* grad_in) {
  const int H = in.height, W = in.width;
  for (int o = 0; o < grad_out.channels; ++o) {
    const T* go = grad_out.channel(o);
    T bsum = T(0);
    for (std::size_t i = 0; i < grad_out.plane(); ++i) bsum += go[i];
    grad_b[o] += bsum;
    for (int c = 0; c < in.channels; ++c) {
      const T* src = in.channel(c);
      const std::size_t kbase = (static_cast<std::size_t>(o) * in.channels + c) * 9;
      T* gi = grad_in ? grad_in->channel(c) : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int dy = ky - 1, dx = kx - 1;
          const int y_lo = std::max(0, -dy), y_hi = std::min(H, H - dy);
          const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
          const T wk = w[kbase + ky * 3 + kx];
          T acc = T(0);
          for (int y = y_lo; y < y_hi; ++y) {
            const T* grow = go + static_cast<std::size_t>(y) * W;
            const T* srow = src + static_cast<std::size_t>(y + dy) * W + dx;
            for (int x = x_lo; x < x_hi; ++x) acc += grow[x] * srow[x];
            if (gi) {
              T* girow = gi + static_cast<std::size_t>(y + dy) * W + dx;
              for (int x = x_lo; x < x_hi; ++x) girow[x] += wk * grow[x];
            }
          }
          grad_w[kbase + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (auto& v : t.data) v = v > T(0) ? v : T(0);
}

// 2x2 stride-2 max pooling; ties resolve to the first element in row-major
// order within the window.
template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& in, std::vector<std::uint32_t>& argmax) {
  Tensor<T> out(in.channels, in.height / 2, in.width / 2);
  argmax.assign(out.data.size(), 0);
  for (int c = 0; c < in.channels; ++c) {
    const T* src = in.channel(c);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        std::uint32_t best = static_cast<std::uint32_t>((2 * y) * in.width + 2 * x);
        T best_v = src[best];
        const std::uint32_t cand[3] = {best + 1, best + static_cast<std::uint32_t>(in.width),
                                       best + static_cast<std::uint32_t>(in.width) + 1};
        for (auto idx : cand)
          if (src[idx] > best_v) {
            best_v = src[idx];
            best = idx;
          }
        const std::size_t o = c * out.plane() + static_cast<std::size_t>(y) * out.width + x;
        out.data[o] = best_v;
        argmax[o] = best;
      }
  }
  return out;
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(static_cast<double>(x)); });
}

}  // namespace detail

/// Runs the network. In Mode::Train a dropout mask is drawn from `rng` and,
/// when `cache` is given, every activation needed by backward() is stored.
template <typename T, typename Rng>
PredictionHead<T> forward(const RegressorParams<T>& params, const Tensor<T>& input, Mode mode, Rng& rng,
                          ForwardCache<T>* cache = nullptr) {
  const RegressorConfig& cfg = params.config;
  if (input.channels != cfg.channels || input.height != cfg.input_side || input.width != cfg.input_side) {
    throw Error(ErrorKind::ShapeMismatch, "input tensor does not match the regressor configuration");
  }
  if (cache) cache->valid = false;

  Tensor<T> x = input;
  for (int i = 0; i < kConvLayers; ++i) {
    Tensor<T> y(cfg.filters[i], x.height, x.width);
    detail::conv3x3_forward(x, params.conv_w(i).value, params.conv_b(i).value, y);
    detail::relu_inplace(y);
    if (cache) cache->conv_in[i] = std::move(x);
    if (i % 2 == 1) {
      std::vector<std::uint32_t> argmax;
      Tensor<T> pooled = detail::maxpool2_forward(y, argmax);
      if (cache) {
        cache->pool_argmax[i] = std::move(argmax);
        cache->conv_out[i] = std::move(y);
      }
      x = std::move(pooled);
    } else {
      if (cache) cache->conv_out[i] = y;
      x = std::move(y);
    }
  }

  std::vector<T> gap(x.channels, T(0));
  for (int c = 0; c < x.channels; ++c) {
    const T* src = x.channel(c);
    T s = T(0);
    for (std::size_t i = 0; i < x.plane(); ++i) s += src[i];
    gap[c] = s / static_cast<T>(x.plane());
  }

  const auto& w1 = params.fc1_w().value;
  const auto& b1 = params.fc1_b().value;
  std::vector<T> fc1(cfg.fc1_units);
  for (int o = 0; o < cfg.fc1_units; ++o) {
    T acc = b1[o];
    const T* row = w1.data() + static_cast<std::size_t>(o) * gap.size();
    for (std::size_t i = 0; i < gap.size(); ++i) acc += row[i] * gap[i];
    fc1[o] = acc > T(0) ? acc : T(0);
  }

  std::vector<T> scale(cfg.fc1_units, T(1));
  if (mode == Mode::Train && cfg.dropout > 0.0) {
    std::bernoulli_distribution keep(1.0 - cfg.dropout);
    const T inv_keep = static_cast<T>(1.0 / (1.0 - cfg.dropout));
    for (auto& s : scale) s = keep(rng) ? inv_keep : T(0);
  }
  std::vector<T> dropped(cfg.fc1_units);
  for (int o = 0; o < cfg.fc1_units; ++o) dropped[o] = fc1[o] * scale[o];

  const auto& w2 = params.fc2_w().value;
  const auto& b2 = params.fc2_b().value;
  PredictionHead<T> out{};
  for (int o = 0; o < cfg.outputs; ++o) {
    T acc = b2[o];
    const T* row = w2.data() + static_cast<std::size_t>(o) * cfg.fc1_units;
    for (int i = 0; i < cfg.fc1_units; ++i) acc += row[i] * dropped[i];
    out[o] = acc;
  }
  for (T v : out)
    if (!std::isfinite(static_cast<double>(v))) throw Error(ErrorKind::NonFiniteActivation, "non-finite regression output");

  if (cache) {
    cache->gap = std::move(gap);
    cache->fc1_act = std::move(fc1);
    cache->dropout_scale = std::move(scale);
    cache->fc1_dropped = std::move(dropped);
    cache->output = out;
    cache->params_version = params.version;
    cache->valid = true;
  }
  return out;
}

/// Deterministic evaluation-mode forward pass.
template <typename T>
PredictionHead<T> predict(const RegressorParams<T>& params, const Tensor<T>& input) {
  std::mt19937_64 unused(0);
  return forward(params, input, Mode::Eval, unused, static_cast<ForwardCache<T>*>(nullptr));
}

/// Accumulates parameter gradients of sum_o grad_out[o] * output[o] into
/// `grads`; optionally writes the gradient with respect to the input tensor.
template <typename T>
void backward(const RegressorParams<T>& params, const ForwardCache<T>& cache, const PredictionHead<T>& grad_out,
              Gradients<T>& grads, Tensor<T>* grad_input = nullptr) {
  if (!cache.valid || cache.params_version != params.version) {
    throw Error(ErrorKind::StaleCache, "backward needs the cache of a forward pass with the current parameters");
  }
  const RegressorConfig& cfg = params.config;
  const int fc1_n = cfg.fc1_units;
  const std::size_t n_fc2 = 2 * kConvLayers + 2;

  // fc2
  std::vector<T> g_dropped(fc1_n, T(0));
  {
    auto& gw = grads.tensors[n_fc2];
    auto& gb = grads.tensors[n_fc2 + 1];
    const auto& w2 = params.fc2_w().value;
    for (int o = 0; o < cfg.outputs; ++o) {
      const T g = grad_out[o];
      gb[o] += g;
      if (g == T(0)) continue;
      for (int i = 0; i < fc1_n; ++i) {
        gw[static_cast<std::size_t>(o) * fc1_n + i] += g * cache.fc1_dropped[i];
        g_dropped[i] += g * w2[static_cast<std::size_t>(o) * fc1_n + i];
      }
    }
  }

  // dropout + ReLU + fc1
  const std::size_t n_gap = cache.gap.size();
  std::vector<T> g_gap(n_gap, T(0));
  {
    auto& gw = grads.tensors[n_fc2 - 2];
    auto& gb = grads.tensors[n_fc2 - 1];
    const auto& w1 = params.fc1_w().value;
    for (int o = 0; o < fc1_n; ++o) {
      const T g = cache.fc1_act[o] > T(0) ? g_dropped[o] * cache.dropout_scale[o] : T(0);
      gb[o] += g;
      if (g == T(0)) continue;
      for (std::size_t i = 0; i < n_gap; ++i) {
        gw[o * n_gap + i] += g * cache.gap[i];
        g_gap[i] += g * w1[o * n_gap + i];
      }
    }
  }

  // global average pooling over the last pooled map
  const Tensor<T>& last = cache.conv_out[kConvLayers - 1];
  Tensor<T> g_x(last.channels, last.height / 2, last.width / 2);
  for (int c = 0; c < g_x.channels; ++c) {
    const T g = g_gap[c] / static_cast<T>(g_x.plane());
    std::fill(g_x.channel(c), g_x.channel(c) + g_x.plane(), g);
  }

  for (int i = kConvLayers - 1; i >= 0; --i) {
    const Tensor<T>& out = cache.conv_out[i];
    Tensor<T> g_y(out.channels, out.height, out.width);
    if (i % 2 == 1) {
      const auto& argmax = cache.pool_argmax[i];
      for (int c = 0; c < g_x.channels; ++c)
        for (std::size_t k = 0; k < g_x.plane(); ++k) {
          const std::size_t pooled = c * g_x.plane() + k;
          g_y.channel(c)[argmax[pooled]] += g_x.data[pooled];
        }
    } else {
      g_y = std::move(g_x);
    }
    for (std::size_t k = 0; k < g_y.data.size(); ++k)
      if (!(out.data[k] > T(0))) g_y.data[k] = T(0);

    const Tensor<T>& in = cache.conv_in[i];
    const bool need_input_grad = i > 0 || grad_input != nullptr;
    Tensor<T> g_in;
    if (need_input_grad) g_in = Tensor<T>(in.channels, in.height, in.width);
    detail::conv3x3_backward(in, params.conv_w(i).value, g_y, grads.tensors[2 * i], grads.tensors[2 * i + 1],
                             need_input_grad ? &g_in : nullptr);
    if (i > 0) {
      g_x = std::move(g_in);
    } else if (grad_input) {
      *grad_input = std::move(g_in);
    }
  }
}

/// He-style initialisation: N(0, 2 / fan_in) weights, zero biases, except the
/// regression head's bias which starts at the identity's free elements.
template <typename T>
RegressorParams<T> init_params(const RegressorConfig& cfg, std::uint64_t seed) {
  RegressorParams<T> p(cfg);
  std::mt19937_64 rng(seed);
  for (auto& t : p.tensors) {
    if (t.shape.size() < 2) continue;
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < t.shape.size(); ++d) fan_in *= static_cast<std::size_t>(t.shape[d]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& v : t.value) v = static_cast<T>(dist(rng));
  }
  const auto identity = Homography3::identity(Frame::Normalized).free_elements();
  for (int i = 0; i < kOutputs; ++i) p.fc2_b().value[i] = static_cast<T>(identity[i]);
  return p;
}

// ---------------------------------------------------------------------------
// Losses

template <typename T>
struct HeadLoss {
  T value{};
  PredictionHead<T> grad{};
};

/// Mean over the eight elements of the squared difference.
template <typename T>
HeadLoss<T> l2_homography_loss(const PredictionHead<T>& pred, const PredictionHead<T>& target) {
  HeadLoss<T> out;
  for (int i = 0; i < kOutputs; ++i) {
    const T d = pred[i] - target[i];
    out.value += d * d;
    out.grad[i] = T(2) * d / T(kOutputs);
  }
  out.value /= T(kOutputs);
  return out;
}

/// w2 * L2(pred, target) + w1 * L1(warped, target_patch). A missing target
/// (semi-supervised sample) drops the L2 term.
template <typename T>
T total_loss(const PredictionHead<T>& pred, const std::optional<PredictionHead<T>>& target,
             const BasicPatch<T>& warped, const BasicPatch<T>& target_patch, double w2, double w1) {
  if (w2 < 0.0 || w1 < 0.0) throw Error(ErrorKind::InvalidArgument, "loss weights must be non-negative");
  T loss = T(0);
  if (target && w2 != 0.0) loss += static_cast<T>(w2) * l2_homography_loss(pred, *target).value;
  if (w1 != 0.0) loss += static_cast<T>(w1) * l1_photometric(warped, target_patch).value;
  return loss;
}

}  // namespace homwarp
