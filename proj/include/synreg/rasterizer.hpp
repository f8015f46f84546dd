#pragma once

#include <cstdint>
#include <optional>

#include "synreg/geometry.hpp"
#include "synreg/image.hpp"
#include "synreg/mesh.hpp"

namespace synreg {

/// Object-space procedural texture: two octaves of value noise plus a 3D
/// checker, so appearance is tied to the surface and changes with pose.
struct TextureConfig {
  std::uint64_t seed = 7;
  double noise_cell_mm = 5.0;
  double checker_cell_mm = 7.0;
  double base = 0.25;
  double noise_weight = 0.55;
  double checker_weight = 0.2;
};

/// Value in [0, 1] at an object-space point.
double procedural_texture(const TextureConfig& cfg, const Vec3& p);

struct ShadingConfig {
  /// Direction from the surface toward the light, camera frame.
  Vec3 light_dir = Vec3(-0.3, -0.4, -1.0);
  double ambient = 0.3;
  double diffuse = 0.7;
  double background = 0.5;
  double near_plane_mm = 1e-3;
  TextureConfig texture;
};

struct RenderResult {
  Image image;
  DepthMap depth;
  /// Fraction of pixels covered by the mesh.
  double visibility_fraction = 0.0;
};

/// Z-buffered perspective rasterization with flat Lambertian shading times the
/// procedural texture. Single-threaded and bit-reproducible. Triangles with a
/// vertex closer than the near plane are dropped; no backface culling.
RenderResult rasterize(const TriMesh& mesh, const Pose& pose, const Intrinsics& k, ImageSize size,
                       const ShadingConfig& shading);

/// Inclusive pixel bounding box.
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool operator==(const BBox&) const = default;
};

std::optional<BBox> silhouette_bbox(const DepthMap& depth);

struct OverlayStyle {
  Rgb color = {0.0f, 1.0f, 1.0f};
  float alpha = 0.5f;
};

/// Alpha-blends the color-tinted shaded render over `base` on the silhouette.
/// Throws SizeMismatch when the sizes differ.
RgbImage blend_overlay(const RgbImage& base, const RenderResult& render, const OverlayStyle& style);

/// Renders `mesh` at `pose` with the base image's size and blends it over base.
RgbImage render_overlay(const RgbImage& base, const TriMesh& mesh, const Pose& pose, const Intrinsics& k,
                        const ShadingConfig& shading, const OverlayStyle& style);

/// One-pixel rectangle outline, clipped to the image.
void draw_box(RgbImage& img, const BBox& box, const Rgb& color);

}  // namespace synreg
