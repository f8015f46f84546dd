#include "synreg/rasterizer.hpp"

#include <algorithm>
#include <cmath>

#include "synreg/error.hpp"

namespace synreg {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

double lattice(std::uint64_t seed, std::int64_t i, std::int64_t j, std::int64_t k) {
  std::uint64_t h = mix64(seed ^ 0x9e3779b97f4a7c15ULL);
  h = mix64(h ^ static_cast<std::uint64_t>(i));
  h = mix64(h ^ static_cast<std::uint64_t>(j));
  h = mix64(h ^ static_cast<std::uint64_t>(k));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, const Vec3& p) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
             iz = static_cast<std::int64_t>(fz);
  const double tx = smooth(p.x() - fx), ty = smooth(p.y() - fy), tz = smooth(p.z() - fz);
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
        acc += w * lattice(seed, ix + dx, iy + dy, iz + dz);
      }
    }
  }
  return acc;
}

// Top-left fill rule for a positively oriented triangle in y-down pixel space.
bool is_top_left(const Vec2& a, const Vec2& b) {
  const double dx = b.x() - a.x(), dy = b.y() - a.y();
  return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

double edge(const Vec2& a, const Vec2& b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

}  // namespace

double procedural_texture(const TextureConfig& cfg, const Vec3& p) {
  const Vec3 q = p / cfg.noise_cell_mm;
  const double noise = (2.0 * value_noise(cfg.seed, q) + value_noise(cfg.seed + 1, 2.0 * q + Vec3(0.5, 0.25, 0.75))) / 3.0;
  const Vec3 c = p / cfg.checker_cell_mm;
  const auto parity = static_cast<std::int64_t>(std::floor(c.x()) + std::floor(c.y()) + std::floor(c.z()));
  const double checker = (parity & 1) ? 1.0 : 0.0;
  return std::clamp(cfg.base + cfg.noise_weight * noise + cfg.checker_weight * checker, 0.0, 1.0);
}

RenderResult rasterize(const TriMesh& mesh, const Pose& pose, const Intrinsics& k, ImageSize size,
                       const ShadingConfig& shading) {
  RenderResult out;
  out.image = Image(size.width, size.height, static_cast<float>(shading.background));
  out.depth = DepthMap(size.width, size.height);
  const Vec3 light = shading.light_dir.normalized();

  std::vector<Vec3> cam(mesh.vertices.size());
  for (std::size_t i = 0; i < cam.size(); ++i) cam[i] = pose.apply(mesh.vertices[i]);

  for (const auto& f : mesh.faces) {
    Vec3 pc[3] = {cam[f[0]], cam[f[1]], cam[f[2]]};
    Vec3 po[3] = {mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]};
    if (pc[0].z() <= shading.near_plane_mm || pc[1].z() <= shading.near_plane_mm ||
        pc[2].z() <= shading.near_plane_mm) {
      continue;
    }
    const Vec3 normal = (pc[1] - pc[0]).cross(pc[2] - pc[0]);
    const double nn = normal.norm();
    if (nn == 0.0) continue;
    const double lambert = std::abs(normal.dot(light)) / nn;
    const double shade = shading.ambient + shading.diffuse * lambert;

    Vec2 s[3];
    for (int i = 0; i < 3; ++i) s[i] = project_camera_point(k, pc[i]);
    double area = edge(s[0], s[1], s[2].x(), s[2].y());
    if (area == 0.0 || !std::isfinite(area)) continue;
    if (area < 0.0) {
      std::swap(s[1], s[2]);
      std::swap(pc[1], pc[2]);
      std::swap(po[1], po[2]);
      area = -area;
    }

    const double min_x = std::min({s[0].x(), s[1].x(), s[2].x()});
    const double max_x = std::max({s[0].x(), s[1].x(), s[2].x()});
    const double min_y = std::min({s[0].y(), s[1].y(), s[2].y()});
    const double max_y = std::max({s[0].y(), s[1].y(), s[2].y()});
    const int x0 = static_cast<int>(std::max(0.0, std::ceil(min_x)));
    const int x1 = static_cast<int>(std::min<double>(size.width - 1, std::floor(max_x)));
    const int y0 = static_cast<int>(std::max(0.0, std::ceil(min_y)));
    const int y1 = static_cast<int>(std::min<double>(size.height - 1, std::floor(max_y)));
    if (x0 > x1 || y0 > y1) continue;

    const bool tl0 = is_top_left(s[1], s[2]);
    const bool tl1 = is_top_left(s[2], s[0]);
    const bool tl2 = is_top_left(s[0], s[1]);
    const double inv_z[3] = {1.0 / pc[0].z(), 1.0 / pc[1].z(), 1.0 / pc[2].z()};

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double w0 = edge(s[1], s[2], x, y);
        const double w1 = edge(s[2], s[0], x, y);
        const double w2 = edge(s[0], s[1], x, y);
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        if ((w0 == 0.0 && !tl0) || (w1 == 0.0 && !tl1) || (w2 == 0.0 && !tl2)) continue;
        const double l0 = w0 / area, l1 = w1 / area, l2 = w2 / area;
        const double iz = l0 * inv_z[0] + l1 * inv_z[1] + l2 * inv_z[2];
        const double z = 1.0 / iz;
        double& zb = out.depth.at(x, y);
        if (!(z < zb)) continue;
        zb = z;
        const Vec3 surface = (l0 * inv_z[0] * po[0] + l1 * inv_z[1] * po[1] + l2 * inv_z[2] * po[2]) * z;
        const double v = shade * procedural_texture(shading.texture, surface);
        out.image.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }

  std::size_t covered = 0;
  for (double d : out.depth.depth) covered += d != DepthMap::kBackground;
  out.visibility_fraction = static_cast<double>(covered) / static_cast<double>(out.depth.depth.size());
  return out;
}

std::optional<BBox> silhouette_bbox(const DepthMap& depth) {
  std::optional<BBox> box;
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.covered(x, y)) continue;
      if (!box) {
        box = BBox{x, y, x, y};
      } else {
        box->x0 = std::min(box->x0, x);
        box->y0 = std::min(box->y0, y);
        box->x1 = std::max(box->x1, x);
        box->y1 = std::max(box->y1, y);
      }
    }
  }
  return box;
}

RgbImage blend_overlay(const RgbImage& base, const RenderResult& render, const OverlayStyle& style) {
  if (base.width != render.image.width || base.height != render.image.height) {
    throw SizeMismatch("overlay: base image and render differ in size");
  }
  RgbImage out = base;
  const float a = std::clamp(style.alpha, 0.0f, 1.0f);
  for (int y = 0; y < base.height; ++y) {
    for (int x = 0; x < base.width; ++x) {
      if (!render.depth.covered(x, y)) continue;
      const float v = render.image.at(x, y);
      Rgb& p = out.at(x, y);
      for (int c = 0; c < 3; ++c) p[c] = (1.0f - a) * p[c] + a * style.color[c] * v;
    }
  }
  return out;
}

RgbImage render_overlay(const RgbImage& base, const TriMesh& mesh, const Pose& pose, const Intrinsics& k,
                        const ShadingConfig& shading, const OverlayStyle& style) {
  return blend_overlay(base, rasterize(mesh, pose, k, {base.width, base.height}, shading), style);
}

void draw_box(RgbImage& img, const BBox& box, const Rgb& color) {
  auto plot = [&](int x, int y) {
    if (x >= 0 && y >= 0 && x < img.width && y < img.height) img.at(x, y) = color;
  };
  for (int x = box.x0; x <= box.x1; ++x) {
    plot(x, box.y0);
    plot(x, box.y1);
  }
  for (int y = box.y0; y <= box.y1; ++y) {
    plot(box.x0, y);
    plot(box.x1, y);
  }
}

}  // namespace synreg
