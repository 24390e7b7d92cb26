#pragma once

// Spatial-transformer style warping: projective grid generation, bilinear
// sampling with zero padding, and the analytic gradients of both.
//
// Normalized coordinates put -1 and +1 on the outer edges of the raster, and
// samples are taken at pixel centres, so the identity grid reproduces the
// source exactly.

#include <array>
#include <cmath>
#include <vector>

#include "homwarp/error.hpp"
#include "homwarp/geometry.hpp"
#include "homwarp/image.hpp"

namespace homwarp {

/// Per-output-pixel normalized source coordinates.
template <typename T>
struct SamplingGrid {
  int width = 0;
  int height = 0;
  std::vector<T> u;
  std::vector<T> v;

  SamplingGrid() = default;
  SamplingGrid(int w, int h)
      : width(w), height(h), u(static_cast<std::size_t>(w) * h), v(static_cast<std::size_t>(w) * h) {}

  [[nodiscard]] std::size_t size() const noexcept { return u.size(); }
};

template <typename T>
inline T target_coord(int index, int extent) noexcept {
  return T(2) * (T(index) + T(0.5)) / T(extent) - T(1);
}

template <typename T>
using Mat3T = std::array<T, 9>;

template <typename T>
Mat3T<T> to_mat3(const Homography3& h) {
  Mat3T<T> out{};
  for (int i = 0; i < 9; ++i) out[i] = static_cast<T>(h[i]);
  return out;
}

template <typename T>
SamplingGrid<T> grid_generate(const Mat3T<T>& g, int out_w, int out_h) {
  if (out_w < 2 || out_h < 2) throw Error(ErrorKind::InvalidArgument, "grid dimensions must be >= 2");
  SamplingGrid<T> grid(out_w, out_h);
  for (int i = 0; i < out_h; ++i) {
    const T ty = target_coord<T>(i, out_h);
    for (int j = 0; j < out_w; ++j) {
      const T tx = target_coord<T>(j, out_w);
      const T d = g[6] * tx + g[7] * ty + g[8];
      if (!(std::abs(static_cast<double>(d)) > kDegeneracyFloor)) {
        throw Error(ErrorKind::PointAtInfinity, "grid point maps to infinity");
      }
      const std::size_t k = static_cast<std::size_t>(i) * out_w + j;
      grid.u[k] = (g[0] * tx + g[1] * ty + g[2]) / d;
      grid.v[k] = (g[3] * tx + g[4] * ty + g[5]) / d;
    }
  }
  return grid;
}

template <typename T>
SamplingGrid<T> grid_generate(const Homography3& g, int out_w, int out_h) {
  if (g.frame() != Frame::Normalized) {
    throw Error(ErrorKind::InvalidArgument, "grid_generate expects a normalized homography");
  }
  return grid_generate<T>(to_mat3<T>(g), out_w, out_h);
}

namespace detail {

template <typename T>
struct BilinearTap {
  int x0, y0;
  T fx, fy;
};

template <typename T>
BilinearTap<T> bilinear_tap(T u, T v, int w, int h) noexcept {
  const T x = (u + T(1)) * T(0.5) * T(w) - T(0.5);
  const T y = (v + T(1)) * T(0.5) * T(h) - T(0.5);
  const T xf = std::floor(x);
  const T yf = std::floor(y);
  return {static_cast<int>(xf), static_cast<int>(yf), x - xf, y - yf};
}

// Far outside the raster: all four taps are padding.
template <typename T>
bool fully_outside(T u, T v) noexcept {
  return !(std::abs(u) < T(4)) || !(std::abs(v) < T(4));
}

template <typename T>
T pixel_or_zero(const BasicPatch<T>& src, int x, int y) noexcept {
  if (x < 0 || y < 0 || x >= src.width || y >= src.height) return T(0);
  return src.data[static_cast<std::size_t>(y) * src.width + x];
}

}  // namespace detail

template <typename T>
BasicPatch<T> bilinear_sample(const BasicPatch<T>& src, const SamplingGrid<T>& grid) {
  BasicPatch<T> out(grid.width, grid.height);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const T u = grid.u[k], v = grid.v[k];
    if (detail::fully_outside(u, v)) continue;
    const auto tap = detail::bilinear_tap(u, v, src.width, src.height);
    const T p00 = detail::pixel_or_zero(src, tap.x0, tap.y0);
    const T p10 = detail::pixel_or_zero(src, tap.x0 + 1, tap.y0);
    const T p01 = detail::pixel_or_zero(src, tap.x0, tap.y0 + 1);
    const T p11 = detail::pixel_or_zero(src, tap.x0 + 1, tap.y0 + 1);
    out.data[k] = (T(1) - tap.fy) * ((T(1) - tap.fx) * p00 + tap.fx * p10) +
                  tap.fy * ((T(1) - tap.fx) * p01 + tap.fx * p11);
  }
  return out;
}

template <typename T>
struct SampleGradients {
  BasicPatch<T> grad_src;
  std::vector<T> grad_u;
  std::vector<T> grad_v;
};

/// Gradients of sum_k upstream[k] * out[k] with respect to the source
/// intensities and the grid coordinates.
template <typename T>
SampleGradients<T> bilinear_sample_backward(const BasicPatch<T>& src, const SamplingGrid<T>& grid,
                                            const BasicPatch<T>& upstream) {
  if (upstream.width != grid.width || upstream.height != grid.height) {
    throw Error(ErrorKind::DimensionMismatch, "upstream gradient does not match grid dimensions");
  }
  SampleGradients<T> g{BasicPatch<T>(src.width, src.height), std::vector<T>(grid.size(), T(0)),
                       std::vector<T>(grid.size(), T(0))};
  const T dx_du = T(0.5) * T(src.width);
  const T dy_dv = T(0.5) * T(src.height);
  auto scatter = [&](int x, int y, T value) {
    if (x < 0 || y < 0 || x >= src.width || y >= src.height) return;
    g.grad_src.data[static_cast<std::size_t>(y) * src.width + x] += value;
  };
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const T up = upstream.data[k];
    const T u = grid.u[k], v = grid.v[k];
    if (up == T(0) || detail::fully_outside(u, v)) continue;
    const auto tap = detail::bilinear_tap(u, v, src.width, src.height);
    const T p00 = detail::pixel_or_zero(src, tap.x0, tap.y0);
    const T p10 = detail::pixel_or_zero(src, tap.x0 + 1, tap.y0);
    const T p01 = detail::pixel_or_zero(src, tap.x0, tap.y0 + 1);
    const T p11 = detail::pixel_or_zero(src, tap.x0 + 1, tap.y0 + 1);

    scatter(tap.x0, tap.y0, up * (T(1) - tap.fx) * (T(1) - tap.fy));
    scatter(tap.x0 + 1, tap.y0, up * tap.fx * (T(1) - tap.fy));
    scatter(tap.x0, tap.y0 + 1, up * (T(1) - tap.fx) * tap.fy);
    scatter(tap.x0 + 1, tap.y0 + 1, up * tap.fx * tap.fy);

    const T d_fx = (T(1) - tap.fy) * (p10 - p00) + tap.fy * (p11 - p01);
    const T d_fy = (T(1) - tap.fx) * (p01 - p00) + tap.fx * (p11 - p10);
    g.grad_u[k] = up * d_fx * dx_du;
    g.grad_v[k] = up * d_fy * dy_dv;
  }
  return g;
}

template <typename T>
BasicPatch<T> warp_patch(const BasicPatch<T>& src, const Mat3T<T>& h_norm) {
  return bilinear_sample(src, grid_generate<T>(h_norm, src.width, src.height));
}

template <typename T>
BasicPatch<T> warp_patch(const BasicPatch<T>& src, const Homography3& h_norm) {
  return bilinear_sample(src, grid_generate<T>(h_norm, src.width, src.height));
}

/// Warps a raster by a pixel-frame homography (same output dimensions).
template <typename T>
BasicPatch<T> warp_pixel_frame(const BasicPatch<T>& src, const Homography3& h_pixel) {
  const PixelNormalizer n(src.width, src.height);
  return warp_patch(src, normalize_homography(h_pixel, n));
}

/// Backpropagates per-pixel gradients of warp_patch(src, h) onto the nine
/// entries of h (row-major). Source intensities are treated as constants.
template <typename T>
Mat3T<T> warp_patch_backward_homography(const BasicPatch<T>& src, const Mat3T<T>& h,
                                        const BasicPatch<T>& upstream) {
  const SamplingGrid<T> grid = grid_generate<T>(h, src.width, src.height);
  const SampleGradients<T> sg = bilinear_sample_backward(src, grid, upstream);
  Mat3T<T> out{};
  for (int i = 0; i < grid.height; ++i) {
    const T ty = target_coord<T>(i, grid.height);
    for (int j = 0; j < grid.width; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * grid.width + j;
      const T gu = sg.grad_u[k], gv = sg.grad_v[k];
      if (gu == T(0) && gv == T(0)) continue;
      const T tx = target_coord<T>(j, grid.width);
      const T d = h[6] * tx + h[7] * ty + h[8];
      const T inv_d = T(1) / d;
      const T u = grid.u[k], v = grid.v[k];
      out[0] += gu * tx * inv_d;
      out[1] += gu * ty * inv_d;
      out[2] += gu * inv_d;
      out[3] += gv * tx * inv_d;
      out[4] += gv * ty * inv_d;
      out[5] += gv * inv_d;
      const T back = -(gu * u + gv * v) * inv_d;
      out[6] += back * tx;
      out[7] += back * ty;
      out[8] += back;
    }
  }
  return out;
}

template <typename T>
struct LossWithGradient {
  T value{};
  BasicPatch<T> grad;
};

/// Mean absolute difference and its subgradient with respect to a
/// (sign(a - b) / N, zero at ties).
template <typename T>
LossWithGradient<T> l1_photometric(const BasicPatch<T>& a, const BasicPatch<T>& b) {
  if (!same_dims(a, b)) throw Error(ErrorKind::DimensionMismatch, "l1_photometric needs equal dimensions");
  LossWithGradient<T> out{T(0), BasicPatch<T>(a.width, a.height)};
  if (a.size() == 0) return out;
  const T inv_n = T(1) / static_cast<T>(a.size());
  T sum = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a.data[i] - b.data[i];
    sum += std::abs(d);
    out.grad.data[i] = d > T(0) ? inv_n : (d < T(0) ? -inv_n : T(0));
  }
  out.value = sum * inv_n;
  return out;
}

}  // namespace homwarp
