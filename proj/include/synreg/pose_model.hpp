#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "synreg/geometry.hpp"
#include "synreg/image.hpp"
#include "synreg/network.hpp"

namespace synreg {

struct PosePrediction {
  Rot6 r6;  // raw head output, not orthonormalized
  Vec3 t;   // millimetres
};

class PoseModel {
public:
  explicit PoseModel(ModelConfig cfg) : net_(std::move(cfg)) {}

  const ModelConfig& config() const { return net_.config(); }
  Network<float>& network() { return net_; }
  const Network<float>& network() const { return net_; }

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

private:
  Network<float> net_;
  Mode mode_ = Mode::Eval;
};

/// Throws InvalidConfig.
PoseModel init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Head outputs mapped back to millimetres.
std::vector<PosePrediction> to_predictions(const ModelConfig& cfg, const HeadOutput<float>& out);

/// Batched forward in the model's current mode. Throws ShapeMismatch.
std::vector<PosePrediction> forward(const PoseModel& model, std::span<const Image> images,
                                    std::uint64_t dropout_seed = 0);

/// Requires eval mode (ValidationError otherwise). Propagates DegenerateInput.
Pose predict_pose(const PoseModel& model, const Image& image);
Pose prediction_to_pose(const PosePrediction& p);

/// crc32 of the canonical config JSON.
std::uint32_t config_hash(const ModelConfig& cfg);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: "P6CK", u32 version, u32 config hash, u32 config JSON length, config
/// JSON, u64 parameter count, f32 parameters, u32 crc32 of all preceding bytes.
/// All integers little-endian. Throws IoError.
void save_checkpoint(const PoseModel& model, const std::filesystem::path& path);

/// Loaded models start in eval mode. When `expected` is given, its hash must
/// match the stored one. Throws IoError, CorruptChecksum, VersionMismatch.
PoseModel load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected = {});

}  // namespace synreg
