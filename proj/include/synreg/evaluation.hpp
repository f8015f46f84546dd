#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "synreg/dataset.hpp"
#include "synreg/pose_model.hpp"
#include "synreg/training.hpp"

namespace synreg {

/// Mean distance between corresponding vertices under the two poses.
double add_metric(std::span<const Vec3> vertices, const Pose& p, const Pose& q);

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
  double p90 = 0.0;
  double p95 = 0.0;
  double max = 0.0;
};

/// Linear interpolation between closest ranks; `sorted` must be ascending.
double percentile(std::span<const double> sorted, double q);
/// Statistics are computed from the sorted values, so the input order never
/// affects the result.
Summary summarize(std::vector<double> values);

struct FrameMetrics {
  std::string image;
  double add_mm = 0.0;
  double e_rot_deg = 0.0;
  double e_t_mm = 0.0;
  Vec3 e_t_axis_mm = Vec3::Zero();
};

inline constexpr double kPassThresholdDeg = 10.0;

struct EvalReport {
  std::string protocol = "per-mesh";  // or "leave-one-out"
  std::string case_name;
  std::size_t n_frames = 0;
  Summary add_mm, e_rot_deg, e_t_mm;
  std::array<Summary, 3> e_t_axis_mm;
  /// Fraction of frames with e_rot_deg < kPassThresholdDeg.
  double pass_rate = 0.0;
  std::vector<FrameMetrics> frames;  // ordered by image path
};

FrameMetrics frame_metrics(std::span<const Vec3> vertices, const Pose& gt, const Pose& pred);

/// Aggregates per-frame metrics. Frames are sorted by image path first.
EvalReport make_report(std::vector<FrameMetrics> frames, const std::string& protocol, const std::string& case_name);

/// Predicts every record (in image-path order) with an eval-mode model.
/// Throws IoError, ValidationError (train-mode model).
EvalReport evaluate(const PoseModel& model, const DatasetManifest& manifest, const TriMesh& mesh,
                    const std::string& protocol = "per-mesh", const std::string& case_name = "",
                    int batch_size = 16);

Json report_to_json(const EvalReport& r, bool include_frames = true);
/// Rows ADD / E_rot / E_t (mean and median), per-axis E_t means, pass rate;
/// one column per case.
std::string format_table(std::span<const EvalReport> reports);

struct LooCase {
  std::string name;
  std::string mesh_spec;  // "builtin:<name>" or a mesh path
};

struct LooConfig {
  SceneConfig scene;
  GenerationConfig generation;
  ModelConfig model;
  TrainConfig train;
  /// Share of the pooled training frames held back for model selection.
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct LooFold {
  std::string held_out;
  DatasetManifest train_manifest;
  DatasetManifest val_manifest;
  DatasetManifest test_manifest;
  TrainLog log;
  EvalReport report;
};

/// Synthesizes one dataset per case under work_dir/data/<name>, then for each
/// case trains on the pooled frames of all other cases and evaluates on the
/// held-out one. Fold manifests and reports go to work_dir/fold_<name>/.
/// Throws ValidationError (fewer than 2 cases, duplicate names).
std::vector<LooFold> leave_one_out(const std::vector<LooCase>& cases, const LooConfig& cfg,
                                   const std::filesystem::path& work_dir);

struct BenchReport {
  int batch_size = 1;
  std::size_t n_frames = 0;
  int iterations = 0;
  int warmup = 10;
  double mean_ms = 0.0;  // per batch
  double median_ms = 0.0;
  double p99_ms = 0.0;
  double fps = 0.0;  // 1000 * batch_size / mean_ms
  std::string hardware;
};

std::string hardware_description();

/// Times forward plus rotation recovery on seeded noise frames, one batch at
/// a time, after `warmup` untimed iterations. Throws ValidationError when
/// n_frames < 100 or batch_size < 1.
BenchReport benchmark_inference(const PoseModel& model, std::size_t n_frames, int batch_size, int warmup = 10,
                                std::uint64_t seed = 0);

Json bench_to_json(const BenchReport& r);
std::string format_bench(const BenchReport& r);

}  // namespace synreg
