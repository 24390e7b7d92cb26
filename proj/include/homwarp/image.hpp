#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "homwarp/error.hpp"

namespace homwarp {

/// Single-channel row-major raster. Intensities are nominally in [0, 1].
template <typename T>
struct BasicPatch {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  BasicPatch() = default;
  BasicPatch(int w, int h, T fill = T(0)) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
    if (w < 0 || h < 0) throw Error(ErrorKind::InvalidArgument, "negative raster dimensions");
  }
  BasicPatch(int w, int h, std::vector<T> values) : width(w), height(h), data(std::move(values)) {
    if (data.size() != static_cast<std::size_t>(w) * h) {
      throw Error(ErrorKind::DimensionMismatch, "raster data length != width * height");
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
  [[nodiscard]] T& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  [[nodiscard]] T at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }

  template <typename U>
  [[nodiscard]] BasicPatch<U> cast() const {
    BasicPatch<U> out(width, height);
    std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const BasicPatch&, const BasicPatch&) = default;
};

using ImagePatch = BasicPatch<double>;
using ImagePatchF = BasicPatch<float>;

template <typename T>
bool same_dims(const BasicPatch<T>& a, const BasicPatch<T>& b) noexcept {
  return a.width == b.width && a.height == b.height;
}

template <typename T>
BasicPatch<T> crop(const BasicPatch<T>& src, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || x0 + w > src.width || y0 + h > src.height) {
    throw Error(ErrorKind::DimensionMismatch, "crop rectangle exceeds the source raster");
  }
  BasicPatch<T> out(w, h);
  for (int r = 0; r < h; ++r)
    std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(y0 + r) * src.width + x0, w,
                out.data.begin() + static_cast<std::ptrdiff_t>(r) * w);
  return out;
}

inline std::uint8_t to_u8(double v) noexcept {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline double from_u8(std::uint8_t v) noexcept { return static_cast<double>(v) / 255.0; }

template <typename T>
BasicPatch<T> quantize_u8(const BasicPatch<T>& p) {
  BasicPatch<T> out(p.width, p.height);
  for (std::size_t i = 0; i < p.size(); ++i) out.data[i] = static_cast<T>(from_u8(to_u8(static_cast<double>(p.data[i]))));
  return out;
}

/// Interleaved 8-bit raster straight from a decoder (1, 3 or 4 channels).
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;
};

}  // namespace homwarp
