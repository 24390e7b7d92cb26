#pragma once

// Latency model of a hierarchical cascade: every stage costs one network
// evaluation (l_m) plus one warp-and-recrop of image_a (l_w), so an n-stage
// chain is modeled as d_e = (l_m + l_w) * n.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "homwarp/cascade.hpp"
#include "homwarp/error.hpp"

namespace homwarp {

struct TimingReport {
  int stages = 0;
  int repetitions = 0;
  double l_m = 0.0;  // seconds, median per-stage network latency
  double l_w = 0.0;  // seconds, median per-stage warp overhead
  double d_e_model = 0.0;
  double d_e_measured = 0.0;  // median wall clock of the full chain

  [[nodiscard]] double relative_gap() const { return std::abs(d_e_model - d_e_measured) / d_e_measured; }
};

/// Published GPU latencies for 1, 2 and 3 stages, in milliseconds. Reported
/// as labeled metadata only.
inline constexpr std::array<double, 3> kReferenceGpuMillis{4.87, 11.46, 17.85};

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename Fn>
double time_once(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Uses stages[0..n) on one image pair. Repetitions are interleaved so drift
/// in machine load affects every measurement alike.
template <typename T>
TimingReport bench_timing(std::span<const StagePredictor<T>> stages, int n, int reps, const ImagePatch& image_a,
                          const ImagePatch& patch_b, std::uint32_t rect_x, std::uint32_t rect_y) {
  if (reps < 10) throw Error(ErrorKind::InvalidArgument, "timing needs at least 10 repetitions");
  if (n < 1 || static_cast<std::size_t>(n) > stages.size()) {
    throw Error(ErrorKind::InvalidArgument, "stage count exceeds the available checkpoints");
  }
  for (const auto& s : stages.first(n))
    if (s.is_oracle()) throw Error(ErrorKind::InvalidArgument, "timing needs trained networks, not oracle fixtures");
  const int side = patch_b.width;
  const ImagePatch patch_a = crop(image_a, static_cast<int>(rect_x), static_cast<int>(rect_y), side, side);
  const auto chain = stages.first(n);
  const Homography3 id = Homography3::identity(Frame::Normalized);
  volatile double sink = 0.0;

  // warm-up
  sink = sink + stages[0].predict(patch_a, patch_b, std::nullopt).m()[0];
  sink = sink + recrop_patch(image_a, id, rect_x, rect_y, side).data[0];

  std::vector<double> tm, tw, te;
  for (int r = 0; r < reps; ++r) {
    tm.push_back(detail::time_once([&] { sink = sink + stages[0].predict(patch_a, patch_b, std::nullopt).m()[0]; }));
    tw.push_back(detail::time_once([&] { sink = sink + recrop_patch(image_a, id, rect_x, rect_y, side).data[0]; }));
    te.push_back(detail::time_once([&] {
      sink = sink + hierarchical_infer(chain, image_a, patch_b, rect_x, rect_y).chain.composed.m()[0];
    }));
  }
  TimingReport rep;
  rep.stages = n;
  rep.repetitions = reps;
  rep.l_m = detail::median(tm);
  rep.l_w = detail::median(tw);
  rep.d_e_model = (rep.l_m + rep.l_w) * n;
  rep.d_e_measured = detail::median(te);
  return rep;
}

inline void write_timing_csv(std::ostream& out, std::span<const TimingReport> reports) {
  out << "stages,repetitions,l_m_ms,l_w_ms,d_e_model_ms,d_e_measured_ms,relative_gap,reference_gpu_ms\n";
  for (const auto& r : reports) {
    out << r.stages << ',' << r.repetitions << ',' << r.l_m * 1e3 << ',' << r.l_w * 1e3 << ',' << r.d_e_model * 1e3
        << ',' << r.d_e_measured * 1e3 << ',' << r.relative_gap() << ',';
    if (r.stages >= 1 && r.stages <= 3) out << kReferenceGpuMillis[r.stages - 1];
    out << '\n';
  }
}

}  // namespace homwarp
