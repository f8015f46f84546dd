#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "synreg/dataset.hpp"
#include "synreg/evaluation.hpp"
#include "synreg/network.hpp"
#include "synreg/training.hpp"

namespace synreg {

struct BenchSettings {
  std::size_t frames = 500;
  int batch = 1;
  int warmup = 10;
};

/// Everything a pipeline run needs. Every stage seed is derived from `seed`,
/// so nested configs may not carry their own.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  std::string mesh = "builtin:cavity";
  std::vector<std::string> loo_meshes = {"builtin:sphere", "builtin:cavity", "builtin:blob"};
  SceneConfig scene;
  GenerationConfig generation;
  SplitRatios split;
  ModelConfig model;
  TrainConfig train;
  int eval_batch = 16;
  BenchSettings bench;
  double loo_val_fraction = 0.1;

  RunConfig() { generation.sample.n_frames = 2000; }

  /// Throws ValidationError / InvalidConfig / InvalidRatios.
  void validate() const;
};

enum class Stage : std::uint64_t { Synth = 1, Split, Init, Train, Augment, Loo, Bench };
std::uint64_t stage_seed(const RunConfig& cfg, Stage s);

Json run_config_to_json(const RunConfig& c);
/// Unknown keys and nested seeds are rejected with ValidationError.
RunConfig run_config_from_json(const Json& j);
/// Throws IoError, ValidationError.
RunConfig load_run_config(const std::filesystem::path& path);

/// Frame with the prediction's shaded silhouette blended in cyan, plus the
/// ground-truth bounding box in green and the predicted one in cyan.
RgbImage overlay_image(const Image& frame, const TriMesh& mesh, const Pose& gt, const Pose& pred,
                       const SceneConfig& scene);

inline const Rgb kGroundTruthColor = {0.0f, 1.0f, 0.0f};
inline const Rgb kPredictionColor = {0.0f, 1.0f, 1.0f};

/// 0 success, 1 validation/config, 2 I/O, 3 numeric.
int exit_code_for(const std::exception& e);

/// Parses argv and runs one subcommand. Messages go to `out`, errors to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace synreg
