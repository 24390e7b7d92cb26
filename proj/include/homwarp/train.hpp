#pragma once

// Momentum SGD with linear warmup and cosine decay, and a trainer for a
// k-stage sequence model (k = 1 is the single-network case). Per-sample
// gradients are reduced in index order so the parallel path produces the
// same bits as the sequential one.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "homwarp/cascade.hpp"
#include "homwarp/data.hpp"
#include "homwarp/error.hpp"
#include "homwarp/model.hpp"
#include "homwarp/parallel.hpp"
#include "homwarp/warp.hpp"

namespace homwarp {

enum class NumericMode { F32, F64 };

struct TrainConfig {
  int batch_size = 64;
  double base_lr = 0.05;
  long warmup_steps = 1000;
  long decay_steps = 90000;  // cosine phase after warmup
  double momentum = 0.9;
  double w2 = 1.0;  // L2 weight on the homography elements
  double w1 = 1.0;  // L1 weight on the photometric term
  std::uint64_t seed = 0;
  NumericMode numeric = NumericMode::F32;
  double supervised_fraction = 1.0;  // share of samples that keep their target
  unsigned threads = 1;

  static TrainConfig paper() { return {}; }

  static TrainConfig desk() {
    TrainConfig c;
    c.batch_size = 16;
    c.base_lr = 0.01;
    c.warmup_steps = 50;
    c.decay_steps = 450;
    return c;
  }

  [[nodiscard]] long total_steps() const noexcept { return warmup_steps + decay_steps; }

  void validate() const {
    if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch size must be positive");
    if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw Error(ErrorKind::InvalidArgument, "bad learning rate");
    if (warmup_steps < 0 || decay_steps < 0) throw Error(ErrorKind::InvalidArgument, "negative step counts");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::InvalidArgument, "momentum must be in [0, 1)");
    if (!(w2 >= 0.0) || !(w1 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "loss weights must be non-negative");
    if (!(supervised_fraction >= 0.0 && supervised_fraction <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "supervised fraction must be in [0, 1]");
    }
  }
};

inline double lr_at(long step, const TrainConfig& cfg) {
  if (step < 0) throw Error(ErrorKind::InvalidArgument, "negative step");
  if (step <= cfg.warmup_steps) {
    if (cfg.warmup_steps == 0) return cfg.base_lr;
    return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const long t = step - cfg.warmup_steps;
  if (t >= cfg.decay_steps) return 0.0;
  const double frac = static_cast<double>(t) / static_cast<double>(cfg.decay_steps);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

/// v <- momentum * v + g; p <- p - lr * v. Nothing is modified when the
/// update would be non-finite.
template <typename T>
void sgd_momentum_step(RegressorParams<T>& params, const Gradients<T>& grads, double lr, double momentum) {
  if (grads.tensors.size() != params.tensors.size()) {
    throw Error(ErrorKind::ShapeMismatch, "gradient layout does not match the parameters");
  }
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    const auto& t = params.tensors[k];
    if (grads.tensors[k].size() != t.size()) throw Error(ErrorKind::ShapeMismatch, "gradient size mismatch");
    for (std::size_t i = 0; i < t.size(); ++i) {
      const T v = static_cast<T>(momentum) * t.velocity[i] + grads.tensors[k][i];
      const T p = t.value[i] - static_cast<T>(lr) * v;
      if (!std::isfinite(static_cast<double>(v)) || !std::isfinite(static_cast<double>(p))) {
        throw Error(ErrorKind::NonFiniteUpdate, "non-finite update in " + t.name);
      }
    }
  }
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    auto& t = params.tensors[k];
    for (std::size_t i = 0; i < t.size(); ++i) {
      t.velocity[i] = static_cast<T>(momentum) * t.velocity[i] + grads.tensors[k][i];
      t.value[i] -= static_cast<T>(lr) * t.velocity[i];
    }
  }
  ++params.version;
}

// ---------------------------------------------------------------------------
// Samples

template <typename T>
struct TrainSample {
  BasicPatch<T> patch_a;
  BasicPatch<T> patch_b;
  BasicPatch<T> patch_a_t;
  PredictionHead<T> target{};
  bool supervised = true;
};

/// Converts records; a sample keeps its target with probability
/// `supervised_fraction`, decided by a hash of (seed, index).
template <typename T>
std::vector<TrainSample<T>> to_train_samples(std::span<const SampleRecord> records, double supervised_fraction = 1.0,
                                             std::uint64_t seed = 0) {
  std::vector<TrainSample<T>> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SampleRecord& r = records[i];
    TrainSample<T> s{r.patch_a.cast<T>(), r.patch_b.cast<T>(), r.patch_a_t.cast<T>(), {}, true};
    for (int j = 0; j < 8; ++j) s.target[j] = static_cast<T>(r.hbar[j]);
    if (supervised_fraction < 1.0) {
      const double u = static_cast<double>(splitmix64(seed ^ (0x5EED0000ull + i)) >> 11) * 0x1.0p-53;
      s.supervised = u < supervised_fraction;
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-sample loss and gradient of a k-stage sequence model

template <typename T>
struct SampleLoss {
  T total = T(0);
  T l2 = T(0);  // summed over stages
  T l1 = T(0);
  PredictionHead<T> final_head{};
};

/// Every stage's merged homography takes w2 * L2 against the target and
/// every stage's warped patch takes w1 * L1 against patch_a_t; the stage
/// losses are summed. Gradients are accumulated into grads[stage].
template <typename T, typename Rng>
SampleLoss<T> sequence_sample_gradient(std::span<const RegressorParams<T>> stages, const TrainSample<T>& s,
                                       double w2, double w1, Rng& rng, std::span<Gradients<T>> grads) {
  const std::size_t k = stages.size();
  SequenceOutputs<T> out = sequence_forward(stages, s.patch_a, s.patch_b, Mode::Train, rng, true);
  SampleLoss<T> loss;
  std::vector<PredictionHead<T>> g_merged(k, PredictionHead<T>{});

  for (std::size_t i = 0; i < k; ++i) {
    const SequenceStage<T>& st = out.stages[i];
    PredictionHead<T> merged{};
    for (int j = 0; j < 8; ++j) merged[j] = st.merged[j];
    if (s.supervised && w2 != 0.0) {
      const HeadLoss<T> l2 = l2_homography_loss(merged, s.target);
      loss.l2 += l2.value;
      loss.total += static_cast<T>(w2) * l2.value;
      for (int j = 0; j < 8; ++j) g_merged[i][j] += static_cast<T>(w2) * l2.grad[j];
    }
    if (w1 != 0.0) {
      LossWithGradient<T> l1 = l1_photometric(st.warped, s.patch_a_t);
      loss.l1 += l1.value;
      loss.total += static_cast<T>(w1) * l1.value;
      for (auto& g : l1.grad.data) g *= static_cast<T>(w1);
      const Mat3T<T> gh = warp_patch_backward_homography(s.patch_a, st.merged, l1.grad);
      for (int j = 0; j < 8; ++j) g_merged[i][j] += gh[j];
    }
  }
  for (int j = 0; j < 8; ++j) loss.final_head[j] = out.stages.back().merged[j];

  for (std::size_t ii = k; ii-- > 0;) {
    SequenceStage<T>& st = out.stages[ii];
    PredictionHead<T> g_res = g_merged[ii];
    if (ii > 0) {
      const Mat3T<T> r = with_unit_corner<T>(st.residual);
      const MergeGradients<T> mg = merge_backward(r, out.stages[ii - 1].merged, g_merged[ii]);
      g_res = mg.grad_residual;
      for (int j = 0; j < 8; ++j) g_merged[ii - 1][j] += mg.grad_previous[j];
    }
    Tensor<T> g_input;
    backward(stages[ii], st.cache, g_res, grads[ii], ii > 0 ? &g_input : nullptr);
    if (ii > 0) {
      // channel 0 of this stage's input is the previous stage's warped patch
      const SequenceStage<T>& prev = out.stages[ii - 1];
      BasicPatch<T> g_warped(prev.warped.width, prev.warped.height);
      std::copy(g_input.channel(0), g_input.channel(0) + g_input.plane(), g_warped.data.begin());
      const Mat3T<T> gh = warp_patch_backward_homography(s.patch_a, prev.merged, g_warped);
      for (int j = 0; j < 8; ++j) g_merged[ii - 1][j] += gh[j];
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Trainer

struct CurvePoint {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double l2 = 0.0;
  double l1 = 0.0;
  double corner_error = 0.0;  // batch mean, final stage, pixels
};

template <typename T>
struct TrainResult {
  std::vector<RegressorParams<T>> stages;
  std::vector<CurvePoint> curve;
};

inline constexpr std::uint64_t kInitStream = 0x1A17ull;
inline constexpr std::uint64_t kShuffleStream = 0x5F1Eull;
inline constexpr std::uint64_t kDropoutStream = 0xD409ull;

inline std::uint64_t stage_init_seed(std::uint64_t seed, std::size_t stage) {
  return splitmix64(splitmix64(seed ^ kInitStream) + stage);
}

using StepCallback = std::function<void(const CurvePoint&)>;

template <typename T>
TrainResult<T> train_sequence(std::span<const TrainSample<T>> samples, const TrainConfig& cfg,
                              const RegressorConfig& model, int k, const StepCallback& on_step = {},
                              const std::vector<RegressorParams<T>>* initial = nullptr) {
  cfg.validate();
  model.validate();
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "need at least one stage");
  if (samples.empty()) throw Error(ErrorKind::EmptyCorpus, "training set is empty");
  for (const auto& s : samples)
    if (s.patch_a.width != model.input_side || s.patch_a.height != model.input_side) {
      throw Error(ErrorKind::ShapeMismatch, "sample patch size does not match the model input");
    }

  TrainResult<T> res;
  if (initial) {
    if (initial->size() != static_cast<std::size_t>(k)) throw Error(ErrorKind::InvalidArgument, "need one initial model per stage");
    res.stages = *initial;
  } else {
    for (int i = 0; i < k; ++i) res.stages.push_back(init_params<T>(model, stage_init_seed(cfg.seed, i)));
  }

  const std::size_t n = samples.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 shuffle_rng(splitmix64(cfg.seed ^ kShuffleStream));
  std::size_t cursor = n;  // forces a shuffle on the first draw

  std::vector<std::vector<Gradients<T>>> per_sample(batch);
  for (auto& g : per_sample)
    for (const auto& p : res.stages) g.emplace_back(p);
  std::vector<Gradients<T>> total;
  for (const auto& p : res.stages) total.emplace_back(p);
  std::vector<SampleLoss<T>> losses(batch);
  std::vector<std::size_t> picked(batch);

  const long steps = cfg.total_steps();
  const int side = model.input_side;
  for (long step = 0; step < steps; ++step) {
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        cursor = 0;
      }
      picked[b] = order[cursor++];
    }

    const std::span<const RegressorParams<T>> stage_span(res.stages);
    try {
      parallel_for(batch, cfg.threads, [&](std::size_t b) {
        for (auto& g : per_sample[b]) g.zero();
        std::mt19937_64 rng(splitmix64(cfg.seed ^ kDropoutStream ^ (static_cast<std::uint64_t>(step) * batch + b)));
        losses[b] = sequence_sample_gradient(stage_span, samples[picked[b]], cfg.w2, cfg.w1, rng,
                                             std::span<Gradients<T>>(per_sample[b]));
      });
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::NonFiniteActivation:
        case ErrorKind::DegenerateHomography:
        case ErrorKind::PointAtInfinity:
          throw Error(ErrorKind::DivergedTraining, "step " + std::to_string(step) + ": " + e.what());
        default:
          throw;
      }
    }

    CurvePoint pt;
    pt.step = step;
    pt.lr = lr_at(step, cfg);
    for (auto& g : total) g.zero();
    for (std::size_t b = 0; b < batch; ++b) {
      for (int i = 0; i < k; ++i) total[i].add(per_sample[b][i]);
      pt.loss += static_cast<double>(losses[b].total);
      pt.l2 += static_cast<double>(losses[b].l2);
      pt.l1 += static_cast<double>(losses[b].l1);
      const auto& tgt = samples[picked[b]].target;
      try {
        pt.corner_error += patch_corner_error(to_homography(losses[b].final_head), to_homography(tgt), side);
      } catch (const Error&) {
        pt.corner_error = std::numeric_limits<double>::infinity();
      }
    }
    const double inv_b = 1.0 / static_cast<double>(batch);
    pt.loss *= inv_b;
    pt.l2 *= inv_b;
    pt.l1 *= inv_b;
    pt.corner_error *= inv_b;
    if (!std::isfinite(pt.loss)) {
      throw Error(ErrorKind::DivergedTraining, "non-finite loss at step " + std::to_string(step));
    }
    for (auto& g : total)
      for (auto& t : g.tensors)
        for (auto& v : t) v *= static_cast<T>(inv_b);
    try {
      for (int i = 0; i < k; ++i) sgd_momentum_step(res.stages[i], total[i], pt.lr, cfg.momentum);
    } catch (const Error& e) {
      throw Error(ErrorKind::DivergedTraining, "step " + std::to_string(step) + ": " + e.what());
    }
    res.curve.push_back(pt);
    if (on_step) on_step(pt);
  }
  return res;
}

template <typename T>
TrainResult<T> train_single(std::span<const TrainSample<T>> samples, const TrainConfig& cfg,
                            const RegressorConfig& model, const StepCallback& on_step = {}) {
  return train_sequence(samples, cfg, model, 1, on_step);
}

/// Stage-by-stage training: stage i is a fresh single network trained on
/// data prepared offline by stages 0..i-1. Stage i uses seed cfg.seed + i.
template <typename T>
struct HierarchicalTrainResult {
  std::vector<RegressorParams<T>> stages;
  std::vector<std::vector<CurvePoint>> curves;
  std::vector<std::vector<StageSample>> stage_data;  // input data of every stage
};

template <typename T>
HierarchicalTrainResult<T> train_hierarchical(std::span<const SampleRecord> records, const ImageCorpus& corpus,
                                              const TrainConfig& cfg, const RegressorConfig& model, int k,
                                              const std::function<void(int, const CurvePoint&)>& on_step = {}) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "need at least one stage");
  HierarchicalTrainResult<T> res;
  res.stage_data.push_back(initial_stage_samples(records));
  for (int i = 0; i < k; ++i) {
    std::vector<SampleRecord> stage_records;
    stage_records.reserve(res.stage_data.back().size());
    for (const auto& s : res.stage_data.back()) stage_records.push_back(s.record);
    TrainConfig stage_cfg = cfg;
    stage_cfg.seed = cfg.seed + static_cast<std::uint64_t>(i);
    const auto samples = to_train_samples<T>(stage_records, cfg.supervised_fraction, stage_cfg.seed);
    StepCallback cb;
    if (on_step) cb = [&, i](const CurvePoint& p) { on_step(i, p); };
    TrainResult<T> r = train_single(std::span<const TrainSample<T>>(samples), stage_cfg, model, cb);
    res.stages.push_back(std::move(r.stages.front()));
    res.curves.push_back(std::move(r.curve));
    if (i + 1 < k) {
      const auto predictor = StagePredictor<T>::network(res.stages.back());
      res.stage_data.push_back(hierarchical_prepare_stage_data(predictor, std::span<const StageSample>(res.stage_data.back()),
                                                               corpus, cfg.threads));
    }
  }
  return res;
}

}  // namespace homwarp
