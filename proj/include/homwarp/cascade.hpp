#pragma once

// Multi-stage estimation.
//
// Hierarchical cascade: each stage looks at patch_a re-cropped from image_a
// warped by the running estimate, and predicts the remaining homography in
// that warped frame. The prediction is lifted back into patch_a's original
// frame (conjugation by the running estimate) before it is appended to the
// chain, so the total is the left fold H_{n-1} * ... * H_0 of chain entries.
//
// Sequence cascade: each stage predicts a residual R_i from (previous warped
// patch, patch_b) and a merge layer forms H_i = R_i * H_{i-1}; every stage
// warps the original patch_a. Everything is differentiable end to end.

#include <array>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "homwarp/data.hpp"
#include "homwarp/error.hpp"
#include "homwarp/geometry.hpp"
#include "homwarp/model.hpp"
#include "homwarp/parallel.hpp"
#include "homwarp/warp.hpp"

namespace homwarp {

// ---------------------------------------------------------------------------
// Merge layer: H = canonical(R * P), with R and P given by their free elements.

template <typename T>
Mat3T<T> with_unit_corner(std::span<const T, 8> free) {
  Mat3T<T> m{};
  for (int i = 0; i < 8; ++i) m[i] = free[i];
  m[8] = T(1);
  return m;
}

template <typename T>
Mat3T<T> merge_forward(const Mat3T<T>& r, const Mat3T<T>& prev) {
  Mat3T<T> n{};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      T acc = T(0);
      for (int k = 0; k < 3; ++k) acc += r[a * 3 + k] * prev[k * 3 + b];
      n[a * 3 + b] = acc;
    }
  if (!(std::abs(static_cast<double>(n[8])) > kDegeneracyFloor)) {
    throw Error(ErrorKind::DegenerateHomography, "merged homography has vanishing m33");
  }
  const T s = n[8];
  for (auto& v : n) v /= s;
  n[8] = T(1);
  return n;
}

template <typename T>
struct MergeGradients {
  PredictionHead<T> grad_residual{};
  PredictionHead<T> grad_previous{};
};

/// Gradients through merge_forward with respect to the free elements of both
/// factors, given the gradient on the free elements of the merged matrix.
template <typename T>
MergeGradients<T> merge_backward(const Mat3T<T>& r, const Mat3T<T>& prev, const PredictionHead<T>& grad_merged) {
  Mat3T<T> n{};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      T acc = T(0);
      for (int k = 0; k < 3; ++k) acc += r[a * 3 + k] * prev[k * 3 + b];
      n[a * 3 + b] = acc;
    }
  const T inv = T(1) / n[8];
  Mat3T<T> gn{};
  T g_scale = T(0);
  for (int j = 0; j < 8; ++j) {
    gn[j] = grad_merged[j] * inv;
    g_scale -= grad_merged[j] * n[j] * inv * inv;
  }
  gn[8] = g_scale;
  MergeGradients<T> out;
  // dN/dR = G * P^T, dN/dP = R^T * G
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const int idx = a * 3 + b;
      if (idx == 8) continue;
      T gr = T(0), gp = T(0);
      for (int k = 0; k < 3; ++k) {
        gr += gn[a * 3 + k] * prev[b * 3 + k];
        gp += r[k * 3 + a] * gn[k * 3 + b];
      }
      out.grad_residual[idx] = gr;
      out.grad_previous[idx] = gp;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence forward

template <typename T>
struct SequenceStage {
  Tensor<T> input;               // (previous warped patch or patch_a, patch_b)
  PredictionHead<T> residual{};  // raw network output
  Mat3T<T> merged{};             // cumulative H_i
  BasicPatch<T> warped;          // warp(patch_a, H_i)
  ForwardCache<T> cache;
};

template <typename T>
struct SequenceOutputs {
  std::vector<SequenceStage<T>> stages;

  [[nodiscard]] Homography3 final_homography() const {
    std::array<double, 8> f{};
    for (int i = 0; i < 8; ++i) f[i] = static_cast<double>(stages.back().merged[i]);
    return Homography3::from_free(f, Frame::Normalized);
  }
};

/// Runs a k-stage sequence model. Caches are kept when `keep_caches` is set
/// (training); in Mode::Eval the result is deterministic.
template <typename T, typename Rng>
SequenceOutputs<T> sequence_forward(std::span<const RegressorParams<T>> stages, const BasicPatch<T>& patch_a,
                                    const BasicPatch<T>& patch_b, Mode mode, Rng& rng, bool keep_caches = false) {
  if (stages.empty()) throw Error(ErrorKind::InvalidArgument, "sequence model needs at least one stage");
  SequenceOutputs<T> out;
  out.stages.resize(stages.size());
  for (std::size_t i = 0; i < stages.size(); ++i) {
    SequenceStage<T>& st = out.stages[i];
    st.input = stack_pair(i == 0 ? patch_a : out.stages[i - 1].warped, patch_b);
    st.residual = forward(stages[i], st.input, mode, rng, keep_caches ? &st.cache : nullptr);
    const Mat3T<T> r = with_unit_corner<T>(st.residual);
    st.merged = i == 0 ? r : merge_forward(r, out.stages[i - 1].merged);
    st.warped = warp_patch(patch_a, st.merged);
  }
  return out;
}

template <typename T>
SequenceOutputs<T> sequence_forward(std::span<const RegressorParams<T>> stages, const BasicPatch<T>& patch_a,
                                    const BasicPatch<T>& patch_b) {
  std::mt19937_64 unused(0);
  return sequence_forward(stages, patch_a, patch_b, Mode::Eval, unused, false);
}

// ---------------------------------------------------------------------------
// Stage predictors

/// A trained network, or a ground-truth oracle that echoes the residual it is
/// handed (used as a test fixture and as the perfect-stage reference).
template <typename T>
class StagePredictor {
 public:
  static StagePredictor network(RegressorParams<T> params) {
    StagePredictor p;
    p.params_.emplace(std::move(params));
    return p;
  }
  static StagePredictor oracle() { return StagePredictor(); }

  [[nodiscard]] bool is_oracle() const noexcept { return !params_.has_value(); }
  [[nodiscard]] const RegressorParams<T>& params() const { return *params_; }

  /// Normalized homography relating `patch_a` to `patch_b` (x_a ~ H x_b).
  [[nodiscard]] Homography3 predict(const ImagePatch& patch_a, const ImagePatch& patch_b,
                                    const std::optional<Homography3>& truth) const {
    if (is_oracle()) {
      if (!truth) throw Error(ErrorKind::InvalidArgument, "oracle stage needs the ground truth");
      return *truth;
    }
    const Tensor<T> input = stack_pair(patch_a.cast<T>(), patch_b.cast<T>());
    return to_homography(homwarp::predict(*params_, input));
  }

 private:
  std::optional<RegressorParams<T>> params_;
};

// ---------------------------------------------------------------------------
// Hierarchical cascade

struct StageChain {
  std::vector<Homography3> stages;  // per-stage estimates in patch_a's frame
  Homography3 composed = Homography3::identity(Frame::Normalized);
};

struct StageStep {
  Homography3 lifted;      // stage estimate expressed in the original frame
  Homography3 cumulative;  // running total after this stage
};

/// Folds a warped-frame prediction into the running estimate.
inline StageStep advance_stage(const Homography3& cumulative, const Homography3& prediction) {
  const Homography3 lifted = compose(cumulative, compose(prediction, invert(cumulative)));
  return {lifted, compose(lifted, cumulative)};
}

/// patch_a as seen by the next stage: image_a warped by the running estimate
/// and cropped at the original rectangle, quantized like stored patches.
inline ImagePatch recrop_patch(const ImagePatch& image_a, const Homography3& cumulative_norm, std::uint32_t rect_x,
                               std::uint32_t rect_y, int side) {
  const PixelNormalizer n(side, side);
  const Homography3 h_image = patch_to_image_frame(denormalize_homography(cumulative_norm, n), rect_x, rect_y);
  const ImagePatch warped = warp_pixel_frame(image_a, h_image);
  return quantize_u8(crop(warped, static_cast<int>(rect_x), static_cast<int>(rect_y), side, side));
}

struct HierarchicalResult {
  StageChain chain;
  std::optional<double> corner_error;
};

inline double patch_corner_error(const Homography3& est_norm, const Homography3& truth_norm, int side) {
  const PixelNormalizer n(side, side);
  return mean_corner_error(denormalize_homography(est_norm, n), denormalize_homography(truth_norm, n),
                           patch_corners(side));
}

template <typename T>
HierarchicalResult hierarchical_infer(std::span<const StagePredictor<T>> stages, const ImagePatch& image_a,
                                      const ImagePatch& patch_b, std::uint32_t rect_x, std::uint32_t rect_y,
                                      const std::optional<Homography3>& truth = std::nullopt) {
  if (stages.empty()) throw Error(ErrorKind::InvalidArgument, "hierarchical inference needs at least one stage");
  const int side = patch_b.width;
  HierarchicalResult res;
  Homography3 cumulative = Homography3::identity(Frame::Normalized);
  for (const auto& stage : stages) {
    const ImagePatch patch_a = recrop_patch(image_a, cumulative, rect_x, rect_y, side);
    std::optional<Homography3> residual_truth;
    if (truth) residual_truth = compose(invert(cumulative), *truth);
    const Homography3 pred = stage.predict(patch_a, patch_b, residual_truth);
    const StageStep step = advance_stage(cumulative, pred);
    res.chain.stages.push_back(step.lifted);
    cumulative = step.cumulative;
  }
  res.chain.composed = cumulative;
  if (truth) res.corner_error = patch_corner_error(cumulative, *truth, side);
  return res;
}

/// A record plus the bookkeeping needed to build the next stage's data.
struct StageSample {
  SampleRecord record;  // patch_a re-cropped, hbar = remaining homography
  Homography3 cumulative = Homography3::identity(Frame::Normalized);
  Homography3 truth = Homography3::identity(Frame::Normalized);
};

inline std::vector<StageSample> initial_stage_samples(std::span<const SampleRecord> records) {
  std::vector<StageSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r, Homography3::identity(Frame::Normalized), r.target()});
  return out;
}

/// Four-point offsets of a normalized patch homography.
inline std::array<double, 8> homography_offsets(const Homography3& h_norm, int side) {
  const Homography3 h = denormalize_homography(h_norm, PixelNormalizer(side, side));
  const CornerQuad c = patch_corners(side);
  std::array<double, 8> out{};
  for (int k = 0; k < 4; ++k) {
    const Point2 p = apply_point(h, c[k]);
    out[2 * k] = p.x - c[k].x;
    out[2 * k + 1] = p.y - c[k].y;
  }
  return out;
}

/// Applies one trained stage to every sample and re-derives the next stage's
/// inputs and targets offline.
template <typename T>
std::vector<StageSample> hierarchical_prepare_stage_data(const StagePredictor<T>& stage,
                                                         std::span<const StageSample> current,
                                                         const ImageCorpus& corpus, unsigned threads = 1) {
  std::vector<StageSample> next(current.size());
  // Group consecutive samples of the same source image so it is loaded once.
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t i = 0; i < current.size();) {
    std::size_t j = i + 1;
    while (j < current.size() && current[j].record.image_index == current[i].record.image_index) ++j;
    groups.emplace_back(i, j);
    i = j;
  }
  parallel_for(groups.size(), threads, [&](std::size_t g) {
    const auto [lo, hi] = groups[g];
    const SourceImage img = corpus.load(current[lo].record.image_index);
    for (std::size_t i = lo; i < hi; ++i) {
      const StageSample& cur = current[i];
      const int side = cur.record.patch_a.width;
      const Homography3 pred = stage.predict(cur.record.patch_a, cur.record.patch_b, cur.record.target());
      const StageStep step = advance_stage(cur.cumulative, pred);
      const Homography3 remaining = compose(invert(step.cumulative), cur.truth);

      StageSample out;
      out.cumulative = step.cumulative;
      out.truth = cur.truth;
      out.record = cur.record;
      out.record.patch_a = recrop_patch(img.image, step.cumulative, cur.record.rect_x, cur.record.rect_y, side);
      out.record.hbar = remaining.free_elements();
      out.record.offsets = homography_offsets(remaining, side);
      out.record.patch_a_t = quantize_u8(warp_patch(out.record.patch_a, remaining));
      next[i] = std::move(out);
    }
  });
  return next;
}

}  // namespace homwarp
