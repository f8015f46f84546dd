#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "synreg/augment.hpp"
#include "synreg/dataset.hpp"
#include "synreg/pose_model.hpp"

namespace synreg {

struct LossWeights {
  double lambda_rot = 1.0;
  double lambda_rot_frob = 1.0;
  double lambda_t = 1.0;

  /// All >= 0 and not all zero. Throws InvalidConfig.
  void validate() const;
};

/// Gradient of the loss with respect to the raw head outputs.
struct LossGradient {
  std::array<double, 6> d_r6{};
  Vec3 d_t = Vec3::Zero();
};

/// Largest |arccos argument| at which the geodesic term still has a gradient.
inline constexpr double kArccosGuard = 1.0 - 1e-7;

/// lambda_rot * d_rot(R', R) + lambda_rot_frob * |R' - R|_F^2 + lambda_t * |t' - t|^2
/// with R' recovered from pred.r6. Translation is used in whatever units pred
/// and gt share. The value uses the exact arccos; the gradient of the
/// geodesic term is zero outside |arg| <= kArccosGuard. Throws DegenerateInput.
double pose_loss(const PosePrediction& pred, const Pose& gt, const LossWeights& w, LossGradient* grad = nullptr);

enum class LrSchedule { Constant, Cosine };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  /// Cosine decays the rate from learning_rate towards 0 over all steps.
  LrSchedule lr_schedule = LrSchedule::Constant;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  LossWeights weights;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  /// Stop after this many epochs without a new best validation E_rot; 0 disables.
  int early_stop_patience = 0;
  /// Best-so-far model is written here after each improving epoch when non-empty.
  std::string checkpoint_path;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Rate for 0-based update `step` of `total_steps`.
double learning_rate_at(const TrainConfig& c, long step, long total_steps);

void to_json(Json& j, const LossWeights& w);
void from_json(const Json& j, LossWeights& w);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);

struct EpochLog {
  int epoch = 0;  // zero-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_erot_deg = 0.0;
  double val_et_mm = 0.0;
  double seconds = 0.0;  // wall clock since training started
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;  // index into epochs

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Model config with input normalization taken from a manifest's pixel stats.
ModelConfig normalized_for(ModelConfig cfg, const DatasetManifest& m);

/// Frames decoded once and kept as 8-bit pixels.
struct FrameSet {
  ImageSize size;
  std::vector<std::vector<std::uint8_t>> pixels;
  std::vector<Pose> poses;

  std::size_t size_frames() const { return poses.size(); }
  Image image(std::size_t i) const;
};

/// Throws IoError, SizeMismatch.
FrameSet load_frames(const DatasetManifest& m);

/// Mean loss over a batch in normalized translation units. When `grad` is
/// given it receives the parameter gradient of that mean. `workspace`, when
/// given, is reused for the forward trace.
template <typename T>
double batch_loss(const Network<T>& net, const Tensor<T>& input, std::span<const Pose> gt, const LossWeights& w,
                  Mode mode, std::uint64_t dropout_seed, Buffer<T>* grad,
                  ForwardTrace<T>* workspace = nullptr);

/// Adam. Moments live alongside the step counter.
class Adam {
public:
  Adam(std::size_t n, double lr, double beta1, double beta2, double eps);
  void step(Buffer<float>& params, const Buffer<float>& grad);
  void set_learning_rate(double lr) { lr_ = lr; }

private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  long step_ = 0;
};

/// Mini-batch training. The returned model holds the parameters of the epoch
/// with the lowest mean validation E_rot (lowest train loss when the val set
/// is empty) and is in eval mode. Deterministic given the seed.
/// Throws IoError, NonFiniteLoss (after restoring and saving the best model).
TrainLog train(PoseModel& model, const DatasetManifest& train_set, const DatasetManifest& val_set,
               const TrainConfig& cfg);
TrainLog train(PoseModel& model, const FrameSet& train_set, const FrameSet& val_set, const TrainConfig& cfg);

/// Max over `coords` of |a - n| / max(|a|, |n|, floor), with n the central
/// difference of `loss` at step eps.
double max_relative_gradient_error(const std::function<double(const std::vector<double>&)>& loss,
                                   const std::vector<double>& params, const std::vector<double>& analytic,
                                   std::span<const std::size_t> coords, double eps, double floor = 1e-6);

/// `n_coords` coordinates drawn evenly across parameter tensors.
std::vector<std::size_t> sample_coordinates(const ParameterLayout& layout, std::size_t n_coords, std::uint64_t seed);

/// Analytic parameter gradient of pose_loss after forward, checked in double
/// against central differences. Dropout is active with a fixed mask so its
/// backward path is covered too. epsilon must lie in [1e-6, 1e-3].
double finite_difference_check(const PoseModel& model, const Image& image, const Pose& gt, const LossWeights& w,
                               double epsilon = 1e-6, std::size_t n_coords = 200, std::uint64_t seed = 0);

}  // namespace synreg
