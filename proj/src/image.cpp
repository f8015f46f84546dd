#include "synreg/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <png.h>

#include "synreg/error.hpp"

namespace synreg {

RgbImage RgbImage::from_gray(const Image& g) {
  RgbImage out(g.width, g.height);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) out.pixels[i] = {g.pixels[i], g.pixels[i], g.pixels[i]};
  return out;
}

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::vector<std::uint8_t> quantize(const Image& img) {
  std::vector<std::uint8_t> out(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), out.begin(), [](float v) { return quantize(v); });
  return out;
}

Image from_bytes(int width, int height, const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() != static_cast<std::size_t>(width) * height) throw SizeMismatch("byte buffer size mismatch");
  Image img(width, height);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0f;
  return img;
}

namespace {

void write_png_raw(const std::filesystem::path& path, int width, int height, png_uint_32 format,
                   const std::vector<std::uint8_t>& data) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, data.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write PNG " + path.string() + ": " + msg);
  }
}

}  // namespace

void write_png(const Image& img, const std::filesystem::path& path) {
  write_png_raw(path, img.width, img.height, PNG_FORMAT_GRAY, quantize(img));
}

void write_png(const RgbImage& img, const std::filesystem::path& path) {
  std::vector<std::uint8_t> data;
  data.reserve(img.pixels.size() * 3);
  for (const auto& p : img.pixels) {
    for (float c : p) data.push_back(quantize(c));
  }
  write_png_raw(path, img.width, img.height, PNG_FORMAT_RGB, data);
}

std::vector<std::uint8_t> read_png_bytes(const std::filesystem::path& path, int& width, int& height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, data.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return data;
}

Image read_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto bytes = read_png_bytes(path, w, h);
  return from_bytes(w, h, bytes);
}

namespace {

static_assert(std::endian::native == std::endian::little, "PFDM writer assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("truncated depth file: " + path.string());
  return v;
}

}  // namespace

void write_pfdm(const DepthMap& depth, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write depth file: " + path.string());
  out.write("PFDM", 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(depth.width));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(depth.height));
  for (double d : depth.depth) put<float>(out, static_cast<float>(d));
  if (!out) throw IoError("failed writing depth file: " + path.string());
}

DepthMap read_pfdm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open depth file: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "PFDM", 4) != 0) throw IoError("bad depth file magic: " + path.string());
  const auto w = get<std::uint32_t>(in, path);
  const auto h = get<std::uint32_t>(in, path);
  DepthMap d(static_cast<int>(w), static_cast<int>(h));
  for (auto& v : d.depth) v = get<float>(in, path);
  return d;
}

}  // namespace synreg
