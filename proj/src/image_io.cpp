#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <png.h>

#include "panoptic/errors.hpp"
#include "panoptic/image.hpp"

namespace panoptic {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    if (mode[0] == 'r') throw IngestError("cannot open " + path.string());
    throw IoError("cannot write " + path.string());
  }
  return f;
}

struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> bytes;
};

// Decodes to 8-bit RGB (want_rgb) or untouched 16-bit gray. libpng reports
// errors through longjmp; only trivially destructible state lives across it.
bool decode(std::FILE* file, bool want_rgb, RawPng& out, std::string& error) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    error = "corrupt png";
    return false;
  }
  png_init_io(png, file);
  png_read_info(png, info);
  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (want_rgb) {
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16) png_set_strip_16(png);
    if (depth < 8) png_set_packing(png);
  } else if (color != PNG_COLOR_TYPE_GRAY || depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    error = "expected 16-bit grayscale png";
    return false;
  }
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.width = static_cast<int>(width);
  out.height = static_cast<int>(height);
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  out.bytes.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = out.bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

bool encode(std::FILE* file, int width, int height, int color_type, int bit_depth,
            std::vector<std::uint8_t>& bytes) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, file);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = bytes.size() / static_cast<std::size_t>(height);
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + y * stride;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace

Image<std::uint16_t> read_png_u16(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  RawPng raw;
  std::string error;
  if (!decode(f.get(), false, raw, error)) throw FormatError(path.string() + ": " + error);
  Image<std::uint16_t> image(raw.width, raw.height);
  for (std::size_t i = 0; i < image.data().size(); ++i) {
    image.data()[i] = static_cast<std::uint16_t>((raw.bytes[2 * i] << 8) | raw.bytes[2 * i + 1]);
  }
  return image;
}

void write_png_u16(const std::filesystem::path& path, const Image<std::uint16_t>& image) {
  std::vector<std::uint8_t> bytes(image.data().size() * 2);
  for (std::size_t i = 0; i < image.data().size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(image.data()[i] >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(image.data()[i] & 0xFF);
  }
  FilePtr f = open_file(path, "wb");
  if (!encode(f.get(), image.width(), image.height(), PNG_COLOR_TYPE_GRAY, 16, bytes)) {
    throw IoError("failed to encode " + path.string());
  }
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  RawPng raw;
  std::string error;
  if (!decode(f.get(), true, raw, error)) throw FormatError(path.string() + ": " + error);
  RgbImage image(raw.width, raw.height);
  for (std::size_t i = 0; i < image.data().size(); ++i) {
    image.data()[i] = {raw.bytes[3 * i], raw.bytes[3 * i + 1], raw.bytes[3 * i + 2]};
  }
  return image;
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(image.data().size() * 3);
  for (const Rgb& px : image.data()) bytes.insert(bytes.end(), px.begin(), px.end());
  FilePtr f = open_file(path, "wb");
  if (!encode(f.get(), image.width(), image.height(), PNG_COLOR_TYPE_RGB, 8, bytes)) {
    throw IoError("failed to encode " + path.string());
  }
}

DepthImage read_depth_f32(const std::filesystem::path& path, int width, int height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<std::uint8_t> bytes(n * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw FormatError(path.string() + ": expected " + std::to_string(n) + " f32 depth values");
  }
  DepthImage depth(width, height);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    float value;
    std::memcpy(&value, &bits, sizeof(value));
    depth.data()[i] = value;
  }
  return depth;
}

void write_depth_f32(const std::filesystem::path& path, const DepthImage& depth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (float value : depth.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &value, sizeof(bits));
    const char le[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                        static_cast<char>((bits >> 16) & 0xFF), static_cast<char>(bits >> 24)};
    out.write(le, 4);
  }
}

DepthImage depth_from_u16(const Image<std::uint16_t>& raw, double scale) {
  DepthImage depth(raw.width(), raw.height());
  for (std::size_t i = 0; i < raw.data().size(); ++i) {
    depth.data()[i] = static_cast<float>(raw.data()[i] / scale);
  }
  return depth;
}

Image<std::uint16_t> depth_to_u16(const DepthImage& depth, double scale) {
  Image<std::uint16_t> raw(depth.width(), depth.height());
  for (std::size_t i = 0; i < depth.data().size(); ++i) {
    const double d = depth.data()[i];
    if (!std::isfinite(d) || d <= 0.0) continue;
    raw.data()[i] = static_cast<std::uint16_t>(std::clamp(std::lround(d * scale), 1L, 65535L));
  }
  return raw;
}

}  // namespace panoptic
