#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace panoptic {

/// Row-major image with one value of type T per pixel.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  T& at(int u, int v) { return data_[static_cast<std::size_t>(v) * width_ + u]; }
  const T& at(int u, int v) const { return data_[static_cast<std::size_t>(v) * width_ + u]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Rgb = std::array<std::uint8_t, 3>;
/// z-depth in meters; non-positive or non-finite values are invalid.
using DepthImage = Image<float>;
using RgbImage = Image<Rgb>;
using MaskImage = Image<std::uint8_t>;

// PNG codecs (libpng). All throw IoError / FormatError on failure.
Image<std::uint16_t> read_png_u16(const std::filesystem::path& path);
void write_png_u16(const std::filesystem::path& path, const Image<std::uint16_t>& image);
RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

/// Raw little-endian f32 depth in meters, width * height values.
DepthImage read_depth_f32(const std::filesystem::path& path, int width, int height);
void write_depth_f32(const std::filesystem::path& path, const DepthImage& depth);

/// 16-bit depth to meters: value / scale, 0 stays invalid.
DepthImage depth_from_u16(const Image<std::uint16_t>& raw, double scale);
Image<std::uint16_t> depth_to_u16(const DepthImage& depth, double scale);

}  // namespace panoptic
