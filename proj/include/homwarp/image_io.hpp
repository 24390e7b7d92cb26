#pragma once

// Raster file I/O: binary PGM/PPM natively, PNG through libpng.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include "homwarp/image.hpp"

namespace homwarp {

namespace detail {

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

inline int read_pnm_int(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  int v = -1;
  if (!(in >> v) || v < 0) throw Error(ErrorKind::UnreadableImage, path + ": malformed PNM header");
  return v;
}

}  // namespace detail

/// Binary P5 (grey) or P6 (RGB), maxval up to 65535.
inline RawImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::UnreadableImage, path.string() + ": cannot open");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw Error(ErrorKind::UnreadableImage, path.string() + ": not a binary PGM/PPM file");
  }
  RawImage img;
  img.channels = magic[1] == '5' ? 1 : 3;
  img.width = detail::read_pnm_int(in, path.string());
  img.height = detail::read_pnm_int(in, path.string());
  const int maxval = detail::read_pnm_int(in, path.string());
  if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 65535) {
    throw Error(ErrorKind::UnreadableImage, path.string() + ": unsupported PNM dimensions or maxval");
  }
  in.get();  // single whitespace before the raster

  const std::size_t samples = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.data.resize(samples);
  if (maxval < 256) {
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(samples));
    if (in.gcount() != static_cast<std::streamsize>(samples)) {
      throw Error(ErrorKind::UnreadableImage, path.string() + ": truncated raster");
    }
    if (maxval != 255)
      for (auto& v : img.data) v = static_cast<std::uint8_t>(std::lround(255.0 * v / maxval));
  } else {
    std::vector<unsigned char> wide(samples * 2);
    in.read(reinterpret_cast<char*>(wide.data()), static_cast<std::streamsize>(wide.size()));
    if (in.gcount() != static_cast<std::streamsize>(wide.size())) {
      throw Error(ErrorKind::UnreadableImage, path.string() + ": truncated raster");
    }
    for (std::size_t i = 0; i < samples; ++i) {
      const int v = (wide[2 * i] << 8) | wide[2 * i + 1];  // PNM is big-endian
      img.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * v / maxval));
    }
  }
  return img;
}

inline RawImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw Error(ErrorKind::UnreadableImage, path.string() + ": cannot open");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::UnreadableImage, path.string() + ": libpng initialisation failed");
  }
  RawImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::UnreadableImage, path.string() + ": corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.data.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  rows.resize(img.height);
  for (int r = 0; r < img.height; ++r)
    rows[r] = img.data.data() + static_cast<std::size_t>(r) * img.width * img.channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline bool is_supported_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".png";
}

inline RawImage read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path);
  return read_pnm(path);
}

/// Writes a P5 file, mapping [0,1] linearly onto 0..255.
template <typename T>
void write_pgm(const std::filesystem::path& path, const BasicPatch<T>& patch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidArgument, path.string() + ": cannot open for writing");
  out << "P5\n" << patch.width << ' ' << patch.height << "\n255\n";
  std::vector<std::uint8_t> bytes(patch.size());
  for (std::size_t i = 0; i < patch.size(); ++i) bytes[i] = to_u8(static_cast<double>(patch.data[i]));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline ImagePatch read_pgm(const std::filesystem::path& path) {
  const RawImage raw = read_pnm(path);
  if (raw.channels != 1) throw Error(ErrorKind::UnreadableImage, path.string() + ": expected a greyscale PGM");
  ImagePatch out(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.data.size(); ++i) out.data[i] = from_u8(raw.data[i]);
  return out;
}

}  // namespace homwarp
