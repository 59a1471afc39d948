#pragma once

// PNG encode/decode for RgbImage and Mask (mask as 8-bit gray, 255 = cloth).

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <png.h>

#include "flatbench/error.hpp"
#include "flatbench/image.hpp"

namespace flatbench {

namespace detail {

inline std::string write_png(const void* pixels, int width, int height, png_uint_32 format) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr))
    throw Error(ErrorCode::Io, std::string("png size query failed: ") + image.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr))
    throw Error(ErrorCode::Io, std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

inline std::vector<std::uint8_t> read_png(const std::string& bytes, png_uint_32 format, int& width,
                                          int& height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw Error(ErrorCode::Io, std::string("png header decode failed: ") + image.message);
  image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::Io, std::string("png decode failed: ") + image.message);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buf;
}

}  // namespace detail

inline std::string encode_png(const RgbImage& img) {
  return detail::write_png(img.data().data(), img.width(), img.height(), PNG_FORMAT_RGB);
}

inline std::string encode_png(const Mask& mask) {
  std::vector<std::uint8_t> gray(mask.bits().size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.bits()[i] ? 255 : 0;
  return detail::write_png(gray.data(), mask.width(), mask.height(), PNG_FORMAT_GRAY);
}

inline RgbImage decode_png_rgb(const std::string& bytes) {
  int w = 0, h = 0;
  auto buf = detail::read_png(bytes, PNG_FORMAT_RGB, w, h);
  return RgbImage(w, h, std::move(buf));
}

/// Any gray level >= 128 counts as cloth.
inline Mask decode_png_mask(const std::string& bytes) {
  int w = 0, h = 0;
  auto buf = detail::read_png(bytes, PNG_FORMAT_GRAY, w, h);
  Mask m(w, h, false);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, buf[static_cast<std::size_t>(y) * w + x] >= 128);
  return m;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace flatbench
