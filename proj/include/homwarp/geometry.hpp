#pragma once

// Projective 3x3 homography algebra.
//
// Point convention used throughout the library: a homography H_ba maps
// coordinates in frame b into frame a, x_a ~ H_ba * x_b. Warping image a by
// H_ba therefore *samples* a at H_ba * x for every output pixel x and yields
// an image aligned with frame b.
//
// Pixel frames are continuous: the left edge of the image is x = 0, the right
// edge x = W, and the centre of pixel column j sits at x = j + 0.5.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "homwarp/error.hpp"

namespace homwarp {

inline constexpr double kDegeneracyFloor = 1e-12;

enum class Frame { Pixel, Normalized };

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) noexcept {
  return std::hypot(a.x - b.x, a.y - b.y);
}

using Mat3 = std::array<double, 9>;

inline Mat3 matmul(const Mat3& a, const Mat3& b) noexcept {
  Mat3 out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += a[r * 3 + k] * b[k * 3 + c];
      out[r * 3 + c] = acc;
    }
  }
  return out;
}

inline double determinant(const Mat3& m) noexcept {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

inline Mat3 adjugate(const Mat3& m) noexcept {
  return {m[4] * m[8] - m[5] * m[7], m[2] * m[7] - m[1] * m[8], m[1] * m[5] - m[2] * m[4],
          m[5] * m[6] - m[3] * m[8], m[0] * m[8] - m[2] * m[6], m[2] * m[3] - m[0] * m[5],
          m[3] * m[7] - m[4] * m[6], m[1] * m[6] - m[0] * m[7], m[0] * m[4] - m[1] * m[3]};
}

/// 3x3 projective transform tagged with the coordinate frame it lives in.
/// Instances produced by the library are canonical (m33 == 1).
class Homography3 {
 public:
  Homography3() : Homography3(Frame::Pixel) {}
  explicit Homography3(Frame frame) : m_{1, 0, 0, 0, 1, 0, 0, 0, 1}, frame_(frame) {}
  Homography3(const Mat3& m, Frame frame) : m_(m), frame_(frame) {}

  static Homography3 identity(Frame frame = Frame::Pixel) { return Homography3(frame); }

  static Homography3 translation(double tx, double ty, Frame frame = Frame::Pixel) {
    return Homography3({1, 0, tx, 0, 1, ty, 0, 0, 1}, frame);
  }

  static Homography3 scaling(double sx, double sy, Frame frame = Frame::Pixel) {
    return Homography3({sx, 0, 0, 0, sy, 0, 0, 0, 1}, frame);
  }

  /// Builds a matrix from its eight free elements (h11..h32); h33 = 1.
  static Homography3 from_free(std::span<const double, 8> h, Frame frame = Frame::Normalized) {
    return Homography3({h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0}, frame);
  }

  [[nodiscard]] std::array<double, 8> free_elements() const noexcept {
    std::array<double, 8> out{};
    std::copy_n(m_.begin(), 8, out.begin());
    return out;
  }

  [[nodiscard]] const Mat3& m() const noexcept { return m_; }
  [[nodiscard]] double operator()(int r, int c) const noexcept { return m_[r * 3 + c]; }
  [[nodiscard]] double operator[](int i) const noexcept { return m_[i]; }
  [[nodiscard]] Frame frame() const noexcept { return frame_; }
  [[nodiscard]] double det() const noexcept { return determinant(m_); }

  friend bool operator==(const Homography3&, const Homography3&) = default;

 private:
  Mat3 m_;
  Frame frame_;
};

inline double max_abs_diff(const Homography3& a, const Homography3& b) noexcept {
  double worst = 0.0;
  for (int i = 0; i < 9; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline Homography3 canonicalize(const Homography3& h) {
  const double s = h[8];
  if (!(std::abs(s) > kDegeneracyFloor)) {
    throw Error(ErrorKind::DegenerateHomography, "|m33| <= 1e-12, cannot pin last element to 1");
  }
  Mat3 out = h.m();
  for (auto& v : out) v /= s;
  out[8] = 1.0;
  return Homography3(out, h.frame());
}

/// Maps pixel coordinates of a W x H raster onto [-1, 1]^2.
class PixelNormalizer {
 public:
  PixelNormalizer(double width, double height) : width_(width), height_(height) {
    if (!(width > 0.0) || !(height > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "normalizer dimensions must be positive");
    }
  }

  [[nodiscard]] double width() const noexcept { return width_; }
  [[nodiscard]] double height() const noexcept { return height_; }

  [[nodiscard]] Mat3 matrix() const noexcept {
    return {2.0 / width_, 0.0, -1.0, 0.0, 2.0 / height_, -1.0, 0.0, 0.0, 1.0};
  }

  [[nodiscard]] Mat3 inverse() const noexcept {
    return {width_ / 2.0, 0.0, width_ / 2.0, 0.0, height_ / 2.0, height_ / 2.0, 0.0, 0.0, 1.0};
  }

  [[nodiscard]] Point2 to_normalized(const Point2& p) const noexcept {
    return {2.0 * p.x / width_ - 1.0, 2.0 * p.y / height_ - 1.0};
  }

  [[nodiscard]] Point2 to_pixel(const Point2& p) const noexcept {
    return {(p.x + 1.0) * width_ / 2.0, (p.y + 1.0) * height_ / 2.0};
  }

 private:
  double width_;
  double height_;
};

/// H_norm = M * H * M^-1
inline Homography3 normalize_homography(const Homography3& h, const PixelNormalizer& n) {
  if (h.frame() != Frame::Pixel) {
    throw Error(ErrorKind::InvalidArgument, "normalize_homography expects a pixel-frame matrix");
  }
  return canonicalize(Homography3(matmul(matmul(n.matrix(), h.m()), n.inverse()), Frame::Normalized));
}

inline Homography3 denormalize_homography(const Homography3& h, const PixelNormalizer& n) {
  if (h.frame() != Frame::Normalized) {
    throw Error(ErrorKind::InvalidArgument, "denormalize_homography expects a normalized matrix");
  }
  return canonicalize(Homography3(matmul(matmul(n.inverse(), h.m()), n.matrix()), Frame::Pixel));
}

/// compose(h2, h1) = h2 * h1.
inline Homography3 compose(const Homography3& h2, const Homography3& h1) {
  if (h2.frame() != h1.frame()) {
    throw Error(ErrorKind::InvalidArgument, "compose requires matching frames");
  }
  return canonicalize(Homography3(matmul(h2.m(), h1.m()), h1.frame()));
}

inline Homography3 invert(const Homography3& h) {
  const double d = h.det();
  if (!(std::abs(d) > kDegeneracyFloor)) {
    throw Error(ErrorKind::SingularMatrix, "|det| <= 1e-12");
  }
  Mat3 inv = adjugate(h.m());
  for (auto& v : inv) v /= d;
  return canonicalize(Homography3(inv, h.frame()));
}

/// Left fold compose(h_{n-1}, ... compose(h_1, h_0)), i.e. the product
/// h_{n-1} * ... * h_0 with stage 0 applied first.
inline Homography3 compose_chain(std::span<const Homography3> stages, Frame frame) {
  Homography3 total = Homography3::identity(frame);
  for (const auto& h : stages) total = compose(h, total);
  return total;
}

inline Point2 apply_point(const Homography3& h, const Point2& p) {
  const double d = h[6] * p.x + h[7] * p.y + h[8];
  if (!(std::abs(d) > kDegeneracyFloor)) {
    throw Error(ErrorKind::PointAtInfinity, "homogeneous denominator vanishes");
  }
  return {(h[0] * p.x + h[1] * p.y + h[2]) / d, (h[3] * p.x + h[4] * p.y + h[5]) / d};
}

// ---------------------------------------------------------------------------
// Corner quads and DLT

/// Four corners, counter-clockwise in screen terms starting top-left:
/// top-left, top-right, bottom-right, bottom-left (y grows downwards).
using CornerQuad = std::array<Point2, 4>;

inline CornerQuad square_corners(double x0, double y0, double side) {
  return {Point2{x0, y0}, Point2{x0 + side, y0}, Point2{x0 + side, y0 + side}, Point2{x0, y0 + side}};
}

inline double signed_area(const CornerQuad& q) noexcept {
  double a = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto& p = q[i];
    const auto& n = q[(i + 1) % 4];
    a += p.x * n.y - n.x * p.y;
  }
  return 0.5 * a;
}

/// True when all four turn directions agree and |area| exceeds min_area.
inline bool is_convex_quad(const CornerQuad& q, double min_area = 1.0) noexcept {
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const auto& a = q[i];
    const auto& b = q[(i + 1) % 4];
    const auto& c = q[(i + 2) % 4];
    const double cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
    const int s = cross > 0.0 ? 1 : (cross < 0.0 ? -1 : 0);
    if (s == 0) return false;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return std::abs(signed_area(q)) > min_area;
}

namespace detail {

// Hartley conditioning: centroid to the origin, mean distance sqrt(2).
inline Mat3 isotropic_conditioner(std::span<const Point2> pts) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > kDegeneracyFloor)) {
    throw Error(ErrorKind::DegenerateConfiguration, "all points coincide");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  return {s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0};
}

inline Point2 affine_apply(const Mat3& t, const Point2& p) noexcept {
  return {t[0] * p.x + t[1] * p.y + t[2], t[3] * p.x + t[4] * p.y + t[5]};
}

inline bool has_collinear_triple(std::span<const Point2> pts) noexcept {
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) {
        const double cross = (pts[j].x - pts[i].x) * (pts[k].y - pts[i].y) -
                             (pts[j].y - pts[i].y) * (pts[k].x - pts[i].x);
        if (std::abs(cross) < 1e-9) return true;
      }
  return false;
}

}  // namespace detail

/// Direct linear transform for >= 4 correspondences dst_i ~ H * src_i, with
/// isotropic conditioning of both point sets. Returns a canonical pixel-frame
/// matrix.
inline Homography3 dlt_solve(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size()) {
    throw Error(ErrorKind::DimensionMismatch, "dlt_solve needs matching point counts");
  }
  if (src.size() < 4) {
    throw Error(ErrorKind::DegenerateConfiguration, "dlt_solve needs at least 4 correspondences");
  }
  const Mat3 ts = detail::isotropic_conditioner(src);
  const Mat3 td = detail::isotropic_conditioner(dst);

  std::vector<Point2> ns(src.size()), nd(dst.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    ns[i] = detail::affine_apply(ts, src[i]);
    nd[i] = detail::affine_apply(td, dst[i]);
  }
  // Exhaustive triple scan is only affordable for small sets; larger sets
  // rely on the null-space dimension test below.
  if (ns.size() <= 16 && (detail::has_collinear_triple(ns) || detail::has_collinear_triple(nd))) {
    throw Error(ErrorKind::DegenerateConfiguration, "three correspondences are collinear");
  }

  const auto rows = static_cast<Eigen::Index>(2 * ns.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(rows, 9), 9);
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double x = ns[i].x, y = ns[i].y, u = nd[i].x, v = nd[i].y;
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    a.row(r + 1) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(7) < 1e-10 * sv(0)) {
    throw Error(ErrorKind::DegenerateConfiguration, "correspondences leave a multi-dimensional null space");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn{};
  for (int i = 0; i < 9; ++i) hn[i] = h(i);

  // H = Td^-1 * Hn * Ts
  Mat3 td_inv = adjugate(td);
  const double dd = determinant(td);
  for (auto& v : td_inv) v /= dd;
  const Homography3 out(matmul(matmul(td_inv, hn), ts), Frame::Pixel);
  const Homography3 canon = canonicalize(out);
  if (!(std::abs(canon.det()) > kDegeneracyFloor)) {
    throw Error(ErrorKind::DegenerateConfiguration, "recovered matrix is singular");
  }
  return canon;
}

inline Homography3 dlt_solve(const CornerQuad& src, const CornerQuad& dst) {
  return dlt_solve(std::span<const Point2>(src), std::span<const Point2>(dst));
}

/// Four-point parameterization to 3x3: the homography taking each base
/// corner to base corner + (dx, dy). Offsets are ordered
/// (dx0, dy0, dx1, dy1, dx2, dy2, dx3, dy3) following the quad order.
inline Homography3 offsets_to_homography(const CornerQuad& base, std::span<const double, 8> offsets) {
  CornerQuad moved = base;
  for (int i = 0; i < 4; ++i) {
    moved[i].x += offsets[2 * i];
    moved[i].y += offsets[2 * i + 1];
  }
  return dlt_solve(base, moved);
}

/// Mean Euclidean distance between the two homographies' images of the corners.
inline double mean_corner_error(const Homography3& h_est, const Homography3& h_gt, const CornerQuad& corners) {
  double sum = 0.0;
  for (const auto& c : corners) sum += distance(apply_point(h_est, c), apply_point(h_gt, c));
  return sum / 4.0;
}

// ---------------------------------------------------------------------------
// Text form: nine row-major numbers, whitespace separated.

inline std::string to_text(const Homography3& h) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (int i = 0; i < 9; ++i) os << (i ? " " : "") << h[i];
  return os.str();
}

inline Homography3 parse_homography(const std::string& text, Frame frame) {
  std::istringstream is(text);
  Mat3 m{};
  for (auto& v : m) {
    if (!(is >> v)) throw Error(ErrorKind::InvalidArgument, "expected nine numbers");
  }
  std::string rest;
  if (is >> rest) throw Error(ErrorKind::InvalidArgument, "trailing tokens after nine numbers");
  return canonicalize(Homography3(m, frame));
}

}  // namespace homwarp
