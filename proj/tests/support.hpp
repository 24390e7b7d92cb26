#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the library code paths they check.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "homwarp/geometry.hpp"
#include "homwarp/image.hpp"

namespace oracle {

using M3 = std::array<double, 9>;

inline M3 mul(const M3& a, const M3& b) {
  M3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return r;
}

inline M3 scaled_to_unit_corner(M3 m) {
  for (auto& v : m) v /= m[8];
  return m;
}

/// Inverse by cofactor expansion.
inline M3 inverse(const M3& m) {
  const double a = m[0], b = m[1], c = m[2], d = m[3], e = m[4], f = m[5], g = m[6], h = m[7], i = m[8];
  const double A = e * i - f * h, B = -(d * i - f * g), C = d * h - e * g;
  const double det = a * A + b * B + c * C;
  return {A / det,
          -(b * i - c * h) / det,
          (b * f - c * e) / det,
          B / det,
          (a * i - c * g) / det,
          -(a * f - c * d) / det,
          C / det,
          -(a * h - b * g) / det,
          (a * e - b * d) / det};
}

/// M from pixel [0,W]x[0,H] to [-1,1]^2.
inline M3 normalizer(double w, double h) { return {2.0 / w, 0, -1, 0, 2.0 / h, -1, 0, 0, 1}; }

inline std::array<double, 2> project(const M3& m, double x, double y) {
  const double d = m[6] * x + m[7] * y + m[8];
  return {(m[0] * x + m[1] * y + m[2]) / d, (m[3] * x + m[4] * y + m[5]) / d};
}

/// Closed-form projective map of the unit square onto the quad q0..q3
/// ((0,0)->q0, (1,0)->q1, (1,1)->q2, (0,1)->q3).
inline M3 unit_square_to_quad(const std::array<double, 8>& q) {
  const double x0 = q[0], y0 = q[1], x1 = q[2], y1 = q[3], x2 = q[4], y2 = q[5], x3 = q[6], y3 = q[7];
  const double sx = x0 - x1 + x2 - x3, sy = y0 - y1 + y2 - y3;
  if (sx == 0.0 && sy == 0.0) return {x1 - x0, x2 - x1, x0, y1 - y0, y2 - y1, y0, 0, 0, 1};
  const double dx1 = x1 - x2, dx2 = x3 - x2, dy1 = y1 - y2, dy2 = y3 - y2;
  const double den = dx1 * dy2 - dx2 * dy1;
  const double g = (sx * dy2 - dx2 * sy) / den;
  const double h = (dx1 * sy - sx * dy1) / den;
  return {x1 - x0 + g * x1, x3 - x0 + h * x3, x0, y1 - y0 + g * y1, y3 - y0 + h * y3, y0, g, h, 1};
}

/// Pixel-frame homography taking the side x side square's corners to the
/// corners displaced by `offsets` (TL, TR, BR, BL).
inline M3 square_offsets_homography(double side, const std::array<double, 8>& offsets) {
  const std::array<double, 8> base{0, 0, side, 0, side, side, 0, side};
  std::array<double, 8> q{};
  for (int i = 0; i < 8; ++i) q[i] = base[i] + offsets[i];
  const M3 s{1.0 / side, 0, 0, 0, 1.0 / side, 0, 0, 0, 1};
  return scaled_to_unit_corner(mul(unit_square_to_quad(q), s));
}

/// Normalized target of a square patch with the given corner offsets.
inline M3 normalized_target(double side, const std::array<double, 8>& offsets) {
  const M3 n = normalizer(side, side);
  return scaled_to_unit_corner(mul(mul(n, square_offsets_homography(side, offsets)), inverse(n)));
}

/// Per-pixel bilinear warp written directly from the sampling definition.
inline homwarp::ImagePatch naive_warp(const homwarp::ImagePatch& src, const M3& h) {
  homwarp::ImagePatch out(src.width, src.height);
  const int w = src.width, hh = src.height;
  auto px = [&](long x, long y) -> double {
    if (x < 0 || y < 0 || x >= w || y >= hh) return 0.0;
    return src.data[static_cast<std::size_t>(y) * w + x];
  };
  for (int i = 0; i < hh; ++i)
    for (int j = 0; j < w; ++j) {
      const double tx = (2.0 * j + 1.0) / w - 1.0;
      const double ty = (2.0 * i + 1.0) / hh - 1.0;
      const auto uv = project(h, tx, ty);
      const double sx = (uv[0] + 1.0) * 0.5 * w - 0.5;
      const double sy = (uv[1] + 1.0) * 0.5 * hh - 0.5;
      const double fx = std::floor(sx), fy = std::floor(sy);
      if (!std::isfinite(fx) || !std::isfinite(fy) || std::abs(fx) > 1e6 || std::abs(fy) > 1e6) continue;
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      const double ax = sx - fx, ay = sy - fy;
      out.data[static_cast<std::size_t>(i) * w + j] = (1 - ax) * (1 - ay) * px(x0, y0) + ax * (1 - ay) * px(x0 + 1, y0) +
                                                      (1 - ax) * ay * px(x0, y0 + 1) + ax * ay * px(x0 + 1, y0 + 1);
    }
  return out;
}

/// Random pixel-frame homography: the square [0,side]^2 with corners
/// displaced by up to `rho`.
template <typename Rng>
std::array<double, 8> random_offsets(Rng& rng, double rho) {
  std::uniform_real_distribution<double> u(-rho, rho);
  std::array<double, 8> o{};
  for (auto& v : o) v = u(rng);
  return o;
}

template <typename Rng>
homwarp::ImagePatch random_patch(Rng& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  homwarp::ImagePatch p(w, h);
  for (auto& v : p.data) v = u(rng);
  return p;
}

/// Smooth test image: a few low-frequency waves in [0,1].
inline homwarp::ImagePatch smooth_patch(int w, int h, double phase = 0.0) {
  homwarp::ImagePatch p(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      p.data[static_cast<std::size_t>(y) * w + x] =
          0.5 + 0.25 * std::sin(0.21 * x + 0.13 * y + phase) + 0.2 * std::cos(0.17 * y - 0.07 * x + 2 * phase);
  return p;
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor)
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
