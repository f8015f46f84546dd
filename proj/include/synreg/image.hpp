#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

namespace synreg {

struct ImageSize {
  int width = 256;
  int height = 256;
  bool operator==(const ImageSize&) const = default;
};

/// Grayscale intensities in [0, 1], row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  ImageSize size() const { return {width, height}; }
  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Camera-space z per pixel in mm; +inf marks background.
struct DepthMap {
  static constexpr double kBackground = std::numeric_limits<double>::infinity();

  int width = 0;
  int height = 0;
  std::vector<double> depth;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), depth(static_cast<std::size_t>(w) * h, kBackground) {}

  double& at(int x, int y) { return depth[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
  bool covered(int x, int y) const { return at(x, y) != kBackground; }
};

using Rgb = std::array<float, 3>;

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {0, 0, 0})
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}
  static RgbImage from_gray(const Image& g);

  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// round(255 * clamp(v, 0, 1))
std::uint8_t quantize(float v);
std::vector<std::uint8_t> quantize(const Image& img);
Image from_bytes(int width, int height, const std::vector<std::uint8_t>& bytes);

void write_png(const Image& img, const std::filesystem::path& path);
void write_png(const RgbImage& img, const std::filesystem::path& path);
/// 8-bit grayscale PNG (RGB inputs are converted by luminance). Throws IoError.
Image read_png(const std::filesystem::path& path);
std::vector<std::uint8_t> read_png_bytes(const std::filesystem::path& path, int& width, int& height);

/// "PFDM" magic, u32 width, u32 height, then width*height little-endian f32.
void write_pfdm(const DepthMap& depth, const std::filesystem::path& path);
DepthMap read_pfdm(const std::filesystem::path& path);

}  // namespace synreg
