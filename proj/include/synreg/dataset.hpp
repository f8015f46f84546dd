#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "synreg/geometry.hpp"
#include "synreg/json_io.hpp"
#include "synreg/mesh.hpp"
#include "synreg/rasterizer.hpp"

namespace synreg {

/// Distribution of the view transforms T_i applied to the base pose.
struct SampleConfig {
  int n_frames = 10000;
  /// Per-axis max |angle| of the Euler x-y-z rotation about the centroid.
  double rot_range_deg = 30.0;
  /// Per-axis max |offset| of the translation jitter, camera frame.
  Vec3 trans_jitter_mm = Vec3(15.0, 15.0, 30.0);
  std::uint64_t seed = 0;

  void validate() const;
};

/// Camera setup shared by every frame of a dataset.
struct SceneConfig {
  ImageSize size;
  /// 18466 / 19172 px focals scaled from a 4096 px native width to 256 px.
  Intrinsics intrinsics{18466.0 / 16.0, 19172.0 / 16.0, 128.0, 128.0};
  /// Base pose P_0: camera looking down +z at the mesh 250 mm away.
  Pose base_pose{Rotation(), Vec3(0.0, 0.0, 250.0)};
  ShadingConfig shading;

  void validate() const;
};

struct GenerationConfig {
  SampleConfig sample;
  double visibility_threshold = 0.2;
  int max_retries = 100;
  bool write_depth = false;
  int workers = 1;

  void validate() const;
};

struct FrameRecord {
  std::string image_path;  // relative to the manifest root
  Pose pose;
  std::size_t transform_index = 0;
  double visibility_fraction = 0.0;
  int attempt = 0;
  std::string source;  // dataset / mesh identifier
};

struct DatasetManifest {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::string mesh;  // "builtin:<name>" or a mesh file path
  SceneConfig scene;
  GenerationConfig generation;
  double pixel_mean = 0.5;
  double pixel_std = 0.25;
  std::vector<FrameRecord> records;

  /// Directory that record image paths are relative to. Not serialized.
  std::filesystem::path root;

  std::filesystem::path image_file(const FrameRecord& r) const { return root / r.image_path; }
};

Json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const Json& j);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
/// Loads a manifest and sets its root to the file's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Centroid of the mesh expressed in the base camera frame; view rotations
/// pivot about this point.
Vec3 camera_centroid(const Pose& base, const Vec3& mesh_centroid);

/// One draw of T_i = centroid_centered_transform(Rx Ry Rz, c, jitter) applied
/// to the base pose. The (frame, attempt) pair selects an independent substream.
Pose sample_pose(const Pose& base, const Vec3& mesh_centroid, const SampleConfig& cfg, std::size_t frame,
                 int attempt = 0);

std::vector<Pose> sample_pose_set(const Pose& base, const Vec3& mesh_centroid, const SampleConfig& cfg);

/// Renders every sampled pose to out_dir/frames/%06d.png (and optionally
/// out_dir/depth/%06d.pfdm), resampling frames below the visibility threshold,
/// and writes out_dir/manifest.json. Throws IoError, ResampleExhausted.
DatasetManifest generate_dataset(const TriMesh& mesh, const std::string& mesh_spec, const SceneConfig& scene,
                                 const GenerationConfig& gen, const std::filesystem::path& out_dir,
                                 const std::string& source = "");

/// Re-renders a record from its stored pose, quantized exactly as stored.
std::vector<std::uint8_t> rerender_bytes(const DatasetManifest& m, const TriMesh& mesh, const FrameRecord& r);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Seeded shuffle into disjoint train/val/test manifests. Val and test sizes
/// are rounded; the remainder goes to train. Throws InvalidRatios.
std::array<DatasetManifest, 3> split_dataset(const DatasetManifest& m, const SplitRatios& ratios,
                                             std::uint64_t seed);

/// Concatenates manifests under a common root, rebasing record paths.
/// Scene and normalization are taken from the first manifest; pixel stats
/// are the record-weighted pooled values.
DatasetManifest merge_manifests(const std::vector<DatasetManifest>& parts, const std::filesystem::path& root);

void to_json(Json& j, const SampleConfig& c);
void from_json(const Json& j, SampleConfig& c);
void to_json(Json& j, const SceneConfig& c);
void from_json(const Json& j, SceneConfig& c);
void to_json(Json& j, const GenerationConfig& c);
void from_json(const Json& j, GenerationConfig& c);
void to_json(Json& j, const ShadingConfig& c);
void from_json(const Json& j, ShadingConfig& c);

}  // namespace synreg
