#include "synreg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "synreg/error.hpp"
#include "synreg/parallel.hpp"
#include "synreg/rng.hpp"

namespace synreg {

namespace fs = std::filesystem;

void SampleConfig::validate() const {
  if (n_frames < 1) throw ValidationError("sample.n_frames must be >= 1");
  if (!(rot_range_deg >= 0.0)) throw ValidationError("sample.rot_range_deg must be >= 0");
  if (!(trans_jitter_mm.minCoeff() >= 0.0)) throw ValidationError("sample.trans_jitter_mm must be >= 0");
}

void SceneConfig::validate() const {
  if (size.width <= 0 || size.height <= 0) throw ValidationError("scene.image_size must be positive");
  intrinsics.validate(size.width, size.height);
  if (!base_pose.translation.allFinite()) throw ValidationError("scene.base_pose translation must be finite");
  if (!(shading.light_dir.norm() > 0.0)) throw ValidationError("scene.shading.light_dir must be non-zero");
}

void GenerationConfig::validate() const {
  sample.validate();
  if (!(visibility_threshold >= 0.0 && visibility_threshold <= 1.0)) {
    throw ValidationError("generation.visibility_threshold must lie in [0, 1]");
  }
  if (max_retries < 0) throw ValidationError("generation.max_retries must be >= 0");
  if (workers < 1) throw ValidationError("generation.workers must be >= 1");
}

Vec3 camera_centroid(const Pose& base, const Vec3& mesh_centroid) { return base.apply(mesh_centroid); }

Pose sample_pose(const Pose& base, const Vec3& mesh_centroid, const SampleConfig& cfg, std::size_t frame,
                 int attempt) {
  Rng rng = substream(cfg.seed, {0x706f7365 /* "pose" */, frame, static_cast<std::uint64_t>(attempt)});
  const double range = deg_to_rad(cfg.rot_range_deg);
  const double ax = uniform(rng, -range, range);
  const double ay = uniform(rng, -range, range);
  const double az = uniform(rng, -range, range);
  Vec3 jitter;
  for (int i = 0; i < 3; ++i) jitter[i] = uniform(rng, -cfg.trans_jitter_mm[i], cfg.trans_jitter_mm[i]);
  const Transform t =
      centroid_centered_transform(Rotation::euler_xyz(ax, ay, az), camera_centroid(base, mesh_centroid), jitter);
  return compose_pose(t, base);
}

std::vector<Pose> sample_pose_set(const Pose& base, const Vec3& mesh_centroid, const SampleConfig& cfg) {
  cfg.validate();
  std::vector<Pose> poses;
  poses.reserve(cfg.n_frames);
  for (int i = 0; i < cfg.n_frames; ++i) poses.push_back(sample_pose(base, mesh_centroid, cfg, i));
  return poses;
}

namespace {

std::string frame_name(std::size_t i, const char* dir, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s/%06zu.%s", dir, i, ext);
  return buf;
}

}  // namespace

std::vector<std::uint8_t> rerender_bytes(const DatasetManifest& m, const TriMesh& mesh, const FrameRecord& r) {
  return quantize(rasterize(mesh, r.pose, m.scene.intrinsics, m.scene.size, m.scene.shading).image);
}

DatasetManifest generate_dataset(const TriMesh& mesh, const std::string& mesh_spec, const SceneConfig& scene,
                                 const GenerationConfig& gen, const fs::path& out_dir, const std::string& source) {
  scene.validate();
  gen.validate();
  mesh.validate();

  std::error_code ec;
  fs::create_directories(out_dir / "frames", ec);
  if (gen.write_depth) fs::create_directories(out_dir / "depth", ec);
  if (ec || !fs::is_directory(out_dir / "frames")) throw IoError("cannot create output directory " + out_dir.string());

  const Vec3 centroid = mesh_centroid(mesh);
  const auto n = static_cast<std::size_t>(gen.sample.n_frames);

  DatasetManifest m;
  m.mesh = mesh_spec;
  m.scene = scene;
  m.generation = gen;
  m.root = out_dir;
  m.records.resize(n);
  std::vector<double> sums(n), sumsq(n);

  parallel_for(n, gen.workers, [&](std::size_t i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > gen.max_retries) {
        throw ResampleExhausted("frame " + std::to_string(i) + ": no pose with visibility >= " +
                                std::to_string(gen.visibility_threshold) + " after " +
                                std::to_string(gen.max_retries) + " retries");
      }
      const Pose pose = sample_pose(scene.base_pose, centroid, gen.sample, i, attempt);
      RenderResult render = rasterize(mesh, pose, scene.intrinsics, scene.size, scene.shading);
      if (render.visibility_fraction < gen.visibility_threshold) continue;

      FrameRecord& rec = m.records[i];
      rec.image_path = frame_name(i, "frames", "png");
      rec.pose = pose;
      rec.transform_index = i;
      rec.visibility_fraction = render.visibility_fraction;
      rec.attempt = attempt;
      rec.source = source;
      write_png(render.image, out_dir / rec.image_path);
      if (gen.write_depth) write_pfdm(render.depth, out_dir / frame_name(i, "depth", "pfdm"));

      double s = 0.0, s2 = 0.0;
      for (std::uint8_t b : quantize(render.image)) {
        const double v = b / 255.0;
        s += v;
        s2 += v * v;
      }
      sums[i] = s;
      sumsq[i] = s2;
      return;
    }
  });

  const double count = static_cast<double>(n) * scene.size.width * scene.size.height;
  const double mean = std::accumulate(sums.begin(), sums.end(), 0.0) / count;
  const double ex2 = std::accumulate(sumsq.begin(), sumsq.end(), 0.0) / count;
  m.pixel_mean = mean;
  m.pixel_std = std::sqrt(std::max(ex2 - mean * mean, 1e-12));

  save_manifest(m, out_dir / "manifest.json");
  return m;
}

std::array<DatasetManifest, 3> split_dataset(const DatasetManifest& m, const SplitRatios& ratios,
                                             std::uint64_t seed) {
  if (!(ratios.train > 0.0 && ratios.val > 0.0 && ratios.test > 0.0) ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw InvalidRatios("split ratios must be positive and sum to 1");
  }
  const std::size_t n = m.records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = substream(seed, {0x73706c6974 /* "split" */});
  // Fisher-Yates with an explicit index draw keeps the permutation independent
  // of the standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  const auto n_val = static_cast<std::size_t>(std::llround(ratios.val * n));
  const auto n_test = static_cast<std::size_t>(std::llround(ratios.test * n));
  if (n_val + n_test > n) throw InvalidRatios("split leaves no records for training");
  const std::size_t n_train = n - n_val - n_test;

  std::array<DatasetManifest, 3> out;
  for (auto& part : out) {
    part = m;
    part.records.clear();
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t which = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
    out[which].records.push_back(m.records[order[k]]);
  }
  for (auto& part : out) {
    std::sort(part.records.begin(), part.records.end(),
              [](const FrameRecord& a, const FrameRecord& b) { return a.image_path < b.image_path; });
  }
  return out;
}

DatasetManifest merge_manifests(const std::vector<DatasetManifest>& parts, const fs::path& root) {
  if (parts.empty()) throw ValidationError("merge_manifests: nothing to merge");
  DatasetManifest out = parts.front();
  out.records.clear();
  out.root = root;
  out.mesh.clear();
  double n_total = 0.0, mean_acc = 0.0, ex2_acc = 0.0;
  for (const auto& p : parts) {
    if (!(p.scene.size == out.scene.size)) throw SizeMismatch("merge_manifests: image sizes differ");
    const fs::path rel_root = p.root.lexically_relative(root);
    for (FrameRecord r : p.records) {
      r.image_path = (rel_root / r.image_path).lexically_normal().generic_string();
      out.records.push_back(std::move(r));
    }
    const double n = static_cast<double>(p.records.size());
    n_total += n;
    mean_acc += n * p.pixel_mean;
    ex2_acc += n * (p.pixel_std * p.pixel_std + p.pixel_mean * p.pixel_mean);
    out.mesh += (out.mesh.empty() ? "" : ";") + p.mesh;
  }
  if (n_total > 0) {
    out.pixel_mean = mean_acc / n_total;
    out.pixel_std = std::sqrt(std::max(ex2_acc / n_total - out.pixel_mean * out.pixel_mean, 1e-12));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(Json& j, const SampleConfig& c) {
  j = Json{{"n_frames", c.n_frames},
           {"rot_range_deg", c.rot_range_deg},
           {"trans_jitter_mm", vec3_to_json(c.trans_jitter_mm)},
           {"seed", c.seed}};
}

void from_json(const Json& j, SampleConfig& c) {
  StrictReader(j, "sample")
      .opt("n_frames", c.n_frames)
      .opt("rot_range_deg", c.rot_range_deg)
      .with("trans_jitter_mm", [&](const Json& v) { c.trans_jitter_mm = vec3_from_json(v, "sample.trans_jitter_mm"); })
      .opt("seed", c.seed)
      .finish();
}

void to_json(Json& j, const ShadingConfig& c) {
  j = Json{{"light_dir", vec3_to_json(c.light_dir)},
           {"ambient", c.ambient},
           {"diffuse", c.diffuse},
           {"background", c.background},
           {"near_plane_mm", c.near_plane_mm},
           {"texture",
            {{"seed", c.texture.seed},
             {"noise_cell_mm", c.texture.noise_cell_mm},
             {"checker_cell_mm", c.texture.checker_cell_mm},
             {"base", c.texture.base},
             {"noise_weight", c.texture.noise_weight},
             {"checker_weight", c.texture.checker_weight}}}};
}

void from_json(const Json& j, ShadingConfig& c) {
  StrictReader(j, "shading")
      .with("light_dir", [&](const Json& v) { c.light_dir = vec3_from_json(v, "shading.light_dir"); })
      .opt("ambient", c.ambient)
      .opt("diffuse", c.diffuse)
      .opt("background", c.background)
      .opt("near_plane_mm", c.near_plane_mm)
      .with("texture",
            [&](const Json& t) {
              StrictReader(t, "shading.texture")
                  .opt("seed", c.texture.seed)
                  .opt("noise_cell_mm", c.texture.noise_cell_mm)
                  .opt("checker_cell_mm", c.texture.checker_cell_mm)
                  .opt("base", c.texture.base)
                  .opt("noise_weight", c.texture.noise_weight)
                  .opt("checker_weight", c.texture.checker_weight)
                  .finish();
            })
      .finish();
}

void to_json(Json& j, const SceneConfig& c) {
  j = Json{{"image_size", c.size}, {"intrinsics", c.intrinsics}, {"base_pose", c.base_pose}, {"shading", c.shading}};
}

void from_json(const Json& j, SceneConfig& c) {
  bool principal_given = false;
  StrictReader(j, "scene")
      .with("image_size", [&](const Json& v) { from_json(v, c.size); })
      .with("intrinsics",
            [&](const Json& v) {
              principal_given = v.contains("cx") || v.contains("cy");
              from_json(v, c.intrinsics);
            })
      .with("base_pose", [&](const Json& v) { from_json(v, c.base_pose); })
      .with("shading", [&](const Json& v) { from_json(v, c.shading); })
      .finish();
  // Principal point defaults to the image center.
  if (!principal_given) {
    c.intrinsics.cx = c.size.width / 2.0;
    c.intrinsics.cy = c.size.height / 2.0;
  }
}

void to_json(Json& j, const GenerationConfig& c) {
  j = Json{{"sample", c.sample},
           {"visibility_threshold", c.visibility_threshold},
           {"max_retries", c.max_retries},
           {"write_depth", c.write_depth}};
}

void from_json(const Json& j, GenerationConfig& c) {
  StrictReader(j, "generation")
      .with("sample", [&](const Json& v) { from_json(v, c.sample); })
      .opt("visibility_threshold", c.visibility_threshold)
      .opt("max_retries", c.max_retries)
      .opt("write_depth", c.write_depth)
      .opt("workers", c.workers)
      .finish();
}

namespace {

Json record_to_json(const FrameRecord& r) {
  return Json{{"image", r.image_path},         {"pose", r.pose},       {"transform_index", r.transform_index},
              {"visibility", r.visibility_fraction}, {"attempt", r.attempt}, {"source", r.source}};
}

FrameRecord record_from_json(const Json& j) {
  FrameRecord r;
  StrictReader(j, "record")
      .req("image", r.image_path)
      .with("pose", [&](const Json& v) { from_json(v, r.pose); })
      .opt("transform_index", r.transform_index)
      .opt("visibility", r.visibility_fraction)
      .opt("attempt", r.attempt)
      .opt("source", r.source)
      .finish();
  return r;
}

}  // namespace

Json manifest_to_json(const DatasetManifest& m) {
  Json records = Json::array();
  for (const auto& r : m.records) records.push_back(record_to_json(r));
  return Json{{"format_version", m.format_version},
              {"mesh", m.mesh},
              {"scene", m.scene},
              {"generation", m.generation},
              {"pixel_mean", m.pixel_mean},
              {"pixel_std", m.pixel_std},
              {"records", records}};
}

DatasetManifest manifest_from_json(const Json& j) {
  DatasetManifest m;
  StrictReader r(j, "manifest");
  r.req("format_version", m.format_version);
  if (m.format_version != DatasetManifest::kFormatVersion) {
    throw VersionMismatch("manifest format_version " + std::to_string(m.format_version) + " is not supported");
  }
  r.opt("mesh", m.mesh)
      .with("scene", [&](const Json& v) { from_json(v, m.scene); })
      .with("generation", [&](const Json& v) { from_json(v, m.generation); })
      .opt("pixel_mean", m.pixel_mean)
      .opt("pixel_std", m.pixel_std)
      .with("records",
            [&](const Json& v) {
              if (!v.is_array()) throw ValidationError("manifest.records must be an array");
              for (const auto& rec : v) m.records.push_back(record_from_json(rec));
            })
      .finish();
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << dump_canonical(manifest_to_json(m));
  if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m = manifest_from_json(j);
  m.root = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  return m;
}

}  // namespace synreg
