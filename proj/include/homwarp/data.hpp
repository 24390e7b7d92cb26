#pragma once

// Synthetic patch-pair dataset factory.
//
// For every source image a square rectangle is chosen away from the borders,
// its four corners are perturbed, the full image is warped by the resulting
// homography to give image_b, and both images are cropped at the rectangle.
// The stored target is the normalized patch-frame homography H_ba
// (x_a ~ H_ba x_b) and patch_a_t, patch_a warped into patch_b's frame.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "homwarp/binary_io.hpp"
#include "homwarp/error.hpp"
#include "homwarp/geometry.hpp"
#include "homwarp/image.hpp"
#include "homwarp/image_io.hpp"
#include "homwarp/parallel.hpp"
#include "homwarp/warp.hpp"

namespace homwarp {

inline constexpr int kSourceWidth = 320;
inline constexpr int kSourceHeight = 240;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed of the RNG stream for one (image, sample) pair.
inline constexpr std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t image_index,
                                           std::uint64_t sample_index) noexcept {
  return splitmix64(master_seed ^ (image_index * 2654435761ull + sample_index));
}

/// Greyscale working image, always kSourceWidth x kSourceHeight.
struct SourceImage {
  ImagePatch image;
  std::string origin;
};

struct DataConfig {
  int patch_side = 128;
  double perturbation = 32.0;  // offsets drawn from U[-p, p]
  int margin = 32;             // rectangle keeps this distance from every border
  double min_quad_area = 1000.0;
  int max_attempts = 100;

  static DataConfig paper() { return {}; }

  /// Same geometry scaled by patch_side / 128.
  static DataConfig scaled(int side) {
    DataConfig c;
    const double s = side / 128.0;
    c.patch_side = side;
    c.perturbation = 32.0 * s;
    c.margin = static_cast<int>(std::lround(32.0 * s));
    c.min_quad_area = 1000.0 * s * s;
    return c;
  }

  static DataConfig desk() { return scaled(32); }
};

/// Bilinear resize with pixel-centre alignment and edge clamping.
inline ImagePatch resize_bilinear(const ImagePatch& src, int out_w, int out_h) {
  ImagePatch out(out_w, out_h);
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int i = 0; i < out_h; ++i) {
    const double y = std::clamp((i + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const int y0 = std::min(static_cast<int>(y), src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double fy = y - y0;
    for (int j = 0; j < out_w; ++j) {
      const double x = std::clamp((j + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const int x0 = std::min(static_cast<int>(x), src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double fx = x - x0;
      const double top = (1.0 - fx) * src.at(y0, x0) + fx * src.at(y0, x1);
      const double bot = (1.0 - fx) * src.at(y1, x0) + fx * src.at(y1, x1);
      out.at(i, j) = (1.0 - fy) * top + fy * bot;
    }
  }
  return out;
}

/// Rec.601 luma, then bilinear resize to the working resolution.
inline SourceImage prepare_image(const RawImage& raw, std::string origin = {}) {
  if (raw.width < 8 || raw.height < 8) throw Error(ErrorKind::UnreadableImage, "image smaller than 8x8");
  if (raw.data.size() != static_cast<std::size_t>(raw.width) * raw.height * raw.channels) {
    throw Error(ErrorKind::UnreadableImage, "raster length does not match its header");
  }
  ImagePatch grey(raw.width, raw.height);
  for (std::size_t i = 0; i < grey.size(); ++i) {
    const std::uint8_t* px = raw.data.data() + i * raw.channels;
    double v = 0.0;
    if (raw.channels >= 3) {
      v = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    } else if (raw.channels >= 1) {
      v = px[0];
    }
    grey.data[i] = v / 255.0;
  }
  SourceImage out;
  out.origin = std::move(origin);
  out.image = (raw.width == kSourceWidth && raw.height == kSourceHeight)
                  ? std::move(grey)
                  : resize_bilinear(grey, kSourceWidth, kSourceHeight);
  return out;
}

/// Deterministic band-limited texture: 16 plane waves with random
/// orientation, wavelength in [10, 80] px and phase, rescaled to [0, 1].
inline SourceImage synth_texture(std::uint64_t seed, int w = kSourceWidth, int h = kSourceHeight) {
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::array<Wave, 16> waves{};
  for (auto& wv : waves) {
    const double theta = unit(rng) * std::numbers::pi;
    const double wavelength = 10.0 + 70.0 * unit(rng);
    const double k = 2.0 * std::numbers::pi / wavelength;
    wv = {k * std::cos(theta), k * std::sin(theta), 2.0 * std::numbers::pi * unit(rng), 0.5 + 0.5 * unit(rng)};
  }
  ImagePatch img(w, h);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (const auto& wv : waves) s += wv.amp * std::sin(wv.kx * j + wv.ky * i + wv.phase);
      img.at(i, j) = s;
    }
  const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
  const double lo_v = *lo, span = std::max(*hi - *lo, 1e-12);
  for (auto& v : img.data) v = (v - lo_v) / span;
  return {std::move(img), "synthetic:" + std::to_string(seed)};
}

/// Source images come from a directory (sorted file names) or from the
/// synthetic texture generator.
class ImageCorpus {
 public:
  static ImageCorpus from_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
      throw Error(ErrorKind::UnreadableImage, dir.string() + ": not a directory");
    }
    ImageCorpus c;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.is_regular_file() && is_supported_image(entry.path())) c.files_.push_back(entry.path());
    std::sort(c.files_.begin(), c.files_.end());
    if (c.files_.empty()) throw Error(ErrorKind::EmptyCorpus, dir.string() + ": no PGM/PPM/PNG images");
    return c;
  }

  static ImageCorpus synthetic(std::size_t count, std::uint64_t seed) {
    if (count == 0) throw Error(ErrorKind::EmptyCorpus, "synthetic corpus needs at least one image");
    ImageCorpus c;
    c.synthetic_count_ = count;
    c.synthetic_seed_ = seed;
    return c;
  }

  [[nodiscard]] std::size_t size() const noexcept { return files_.empty() ? synthetic_count_ : files_.size(); }

  [[nodiscard]] SourceImage load(std::size_t index) const {
    if (index >= size()) throw Error(ErrorKind::InvalidArgument, "image index out of range");
    if (!files_.empty()) return prepare_image(read_image(files_[index]), files_[index].string());
    return synth_texture(splitmix64(splitmix64(synthetic_seed_) + index));
  }

 private:
  std::vector<std::filesystem::path> files_;
  std::size_t synthetic_count_ = 0;
  std::uint64_t synthetic_seed_ = 0;
};

struct SampleRecord {
  ImagePatch patch_a;
  ImagePatch patch_b;
  ImagePatch patch_a_t;
  std::array<double, 8> hbar{};
  std::array<double, 8> offsets{};
  std::uint32_t rect_x = 0;
  std::uint32_t rect_y = 0;
  std::uint64_t image_index = 0;

  [[nodiscard]] Homography3 target() const { return Homography3::from_free(hbar, Frame::Normalized); }

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

inline CornerQuad patch_corners(int side) { return square_corners(0.0, 0.0, side); }

/// Pixel-frame patch homography from the stored four-point offsets.
inline Homography3 patch_homography(std::span<const double, 8> offsets, int side) {
  return offsets_to_homography(patch_corners(side), offsets);
}

/// Translation taking patch coordinates to image coordinates.
inline Homography3 rect_translation(std::uint32_t x, std::uint32_t y) {
  return Homography3::translation(static_cast<double>(x), static_cast<double>(y));
}

/// Conjugates a patch-frame pixel homography into the full-image frame.
inline Homography3 patch_to_image_frame(const Homography3& h_patch, std::uint32_t x, std::uint32_t y) {
  const Homography3 t = rect_translation(x, y);
  return compose(t, compose(h_patch, invert(t)));
}

/// Draws one training sample. `forced_offsets` bypasses the random corner
/// perturbation (the rectangle is still drawn from `rng`).
template <typename Rng>
SampleRecord generate_sample(const SourceImage& img, Rng& rng, const DataConfig& cfg,
                             std::uint64_t image_index = 0,
                             const std::optional<std::array<double, 8>>& forced_offsets = std::nullopt) {
  const ImagePatch& image_a = img.image;
  const int side = cfg.patch_side;
  const int x_hi = image_a.width - cfg.margin - side;
  const int y_hi = image_a.height - cfg.margin - side;
  if (x_hi < cfg.margin || y_hi < cfg.margin) {
    throw Error(ErrorKind::InvalidArgument, "patch plus margins do not fit in the source image");
  }
  std::uniform_int_distribution<int> rx(cfg.margin, x_hi);
  std::uniform_int_distribution<int> ry(cfg.margin, y_hi);
  std::uniform_real_distribution<double> off(-cfg.perturbation, cfg.perturbation);

  SampleRecord rec;
  rec.image_index = image_index;
  rec.rect_x = static_cast<std::uint32_t>(rx(rng));
  rec.rect_y = static_cast<std::uint32_t>(ry(rng));

  const CornerQuad base = patch_corners(side);
  bool accepted = false;
  for (int attempt = 0; attempt < cfg.max_attempts && !accepted; ++attempt) {
    if (forced_offsets) {
      rec.offsets = *forced_offsets;
    } else {
      for (auto& o : rec.offsets) o = off(rng);
    }
    CornerQuad moved = base;
    for (int k = 0; k < 4; ++k) {
      moved[k].x += rec.offsets[2 * k];
      moved[k].y += rec.offsets[2 * k + 1];
    }
    accepted = is_convex_quad(moved, cfg.min_quad_area);
    if (forced_offsets && !accepted) break;
  }
  if (!accepted) throw Error(ErrorKind::ResampleExhausted, "no non-degenerate corner perturbation found");

  const Homography3 h_patch = patch_homography(rec.offsets, side);
  const Homography3 h_image = patch_to_image_frame(h_patch, rec.rect_x, rec.rect_y);
  const ImagePatch image_b = warp_pixel_frame(image_a, h_image);

  const Homography3 hbar = normalize_homography(h_patch, PixelNormalizer(side, side));
  rec.hbar = hbar.free_elements();
  rec.patch_a = quantize_u8(crop(image_a, static_cast<int>(rec.rect_x), static_cast<int>(rec.rect_y), side, side));
  rec.patch_b = quantize_u8(crop(image_b, static_cast<int>(rec.rect_x), static_cast<int>(rec.rect_y), side, side));
  rec.patch_a_t = quantize_u8(warp_patch(rec.patch_a, hbar));
  return rec;
}

/// samples_per_image records per image, ordered by (image_index, sample_index).
inline std::vector<SampleRecord> generate_dataset(const ImageCorpus& corpus, int samples_per_image,
                                                  std::uint64_t master_seed, const DataConfig& cfg,
                                                  unsigned threads = 1) {
  if (corpus.size() == 0) throw Error(ErrorKind::EmptyCorpus, "no source images");
  if (samples_per_image <= 0) throw Error(ErrorKind::InvalidArgument, "samples per image must be positive");
  const auto k = static_cast<std::size_t>(samples_per_image);
  std::vector<SampleRecord> records(corpus.size() * k);
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    const SourceImage img = corpus.load(i);
    for (std::size_t s = 0; s < k; ++s) {
      std::mt19937_64 rng(sample_seed(master_seed, i, s));
      records[i * k + s] = generate_sample(img, rng, cfg, i);
    }
  });
  return records;
}

// ---------------------------------------------------------------------------
// Dataset file: "HSTN", u32 version, u64 count, u32 side, then per record
// patch_a, patch_b, patch_a_t as u8 rasters, hbar f64[8], offsets f64[8],
// rect x/y u32, image_index u64. All little-endian.

inline constexpr std::uint32_t kDatasetVersion = 1;

struct Dataset {
  int patch_side = 128;
  std::vector<SampleRecord> records;
};

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  out.write("HSTN", 4);
  binary::put_uint<std::uint32_t>(out, kDatasetVersion);
  binary::put_uint<std::uint64_t>(out, ds.records.size());
  binary::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(ds.patch_side));
  const std::size_t n = static_cast<std::size_t>(ds.patch_side) * ds.patch_side;
  std::vector<std::uint8_t> buf(n);
  auto put_patch = [&](const ImagePatch& p) {
    if (p.size() != n) throw Error(ErrorKind::DimensionMismatch, "record patch does not match the dataset side");
    for (std::size_t i = 0; i < n; ++i) buf[i] = to_u8(p.data[i]);
    binary::put_bytes(out, buf);
  };
  for (const auto& r : ds.records) {
    put_patch(r.patch_a);
    put_patch(r.patch_b);
    put_patch(r.patch_a_t);
    for (double v : r.hbar) binary::put_f64(out, v);
    for (double v : r.offsets) binary::put_f64(out, v);
    binary::put_uint<std::uint32_t>(out, r.rect_x);
    binary::put_uint<std::uint32_t>(out, r.rect_y);
    binary::put_uint<std::uint64_t>(out, r.image_index);
  }
  if (!out) throw Error(ErrorKind::CorruptDataset, "write failed");
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::CorruptDataset, path.string() + ": cannot open for writing");
  write_dataset(out, ds);
}

inline Dataset read_dataset(std::istream& in, const std::string& name = "dataset") {
  binary::Reader rd(in, ErrorKind::CorruptDataset, name);
  std::array<std::uint8_t, 4> magic{};
  rd.bytes(magic);
  if (magic != std::array<std::uint8_t, 4>{'H', 'S', 'T', 'N'}) rd.fail("bad magic");
  if (rd.uint<std::uint32_t>() != kDatasetVersion) rd.fail("unsupported version");
  const auto count = rd.uint<std::uint64_t>();
  Dataset ds;
  const auto side = rd.uint<std::uint32_t>();
  if (side < 2 || side > 4096) rd.fail("implausible patch side");
  ds.patch_side = static_cast<int>(side);
  const std::size_t n = static_cast<std::size_t>(side) * side;
  std::vector<std::uint8_t> buf(n);
  auto get_patch = [&] {
    rd.bytes(buf);
    ImagePatch p(ds.patch_side, ds.patch_side);
    for (std::size_t i = 0; i < n; ++i) p.data[i] = from_u8(buf[i]);
    return p;
  };
  for (std::uint64_t i = 0; i < count; ++i) {
    SampleRecord r;
    r.patch_a = get_patch();
    r.patch_b = get_patch();
    r.patch_a_t = get_patch();
    for (auto& v : r.hbar) v = rd.f64();
    for (auto& v : r.offsets) v = rd.f64();
    r.rect_x = rd.uint<std::uint32_t>();
    r.rect_y = rd.uint<std::uint32_t>();
    r.image_index = rd.uint<std::uint64_t>();
    ds.records.push_back(std::move(r));
  }
  if (!rd.at_end()) rd.fail("trailing bytes after the last record");
  return ds;
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::CorruptDataset, path.string() + ": cannot open");
  return read_dataset(in, path.string());
}

// ---------------------------------------------------------------------------
// Statistics of the eight regression targets.

inline constexpr int kHistogramBins = 64;

struct ElementStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  double min = 0.0;
  double max = 0.0;
  std::array<std::uint64_t, kHistogramBins> counts{};

  [[nodiscard]] double bin_lo(int b) const noexcept { return min + (max - min) * b / kHistogramBins; }
  [[nodiscard]] double bin_hi(int b) const noexcept { return min + (max - min) * (b + 1) / kHistogramBins; }
};

struct DatasetStats {
  std::uint64_t record_count = 0;
  std::array<ElementStats, 8> elements{};
};

inline constexpr std::array<const char*, 8> kElementNames{"h11", "h12", "h13", "h21", "h22", "h23", "h31", "h32"};

inline DatasetStats dataset_stats(std::span<const SampleRecord> records) {
  if (records.empty()) throw Error(ErrorKind::CorruptDataset, "statistics need at least one record");
  DatasetStats st;
  st.record_count = records.size();
  const double n = static_cast<double>(records.size());
  for (int e = 0; e < 8; ++e) {
    ElementStats& s = st.elements[e];
    s.min = s.max = records.front().hbar[e];
    double sum = 0.0;
    for (const auto& r : records) {
      sum += r.hbar[e];
      s.min = std::min(s.min, r.hbar[e]);
      s.max = std::max(s.max, r.hbar[e]);
    }
    s.mean = sum / n;
    double sq = 0.0;
    for (const auto& r : records) sq += (r.hbar[e] - s.mean) * (r.hbar[e] - s.mean);
    s.stddev = std::sqrt(sq / n);
    const double width = s.max - s.min;
    for (const auto& r : records) {
      int b = 0;
      if (width > 0.0) b = std::min(kHistogramBins - 1, static_cast<int>((r.hbar[e] - s.min) / width * kHistogramBins));
      ++s.counts[b];
    }
  }
  return st;
}

}  // namespace homwarp
