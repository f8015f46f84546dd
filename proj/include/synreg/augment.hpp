#pragma once

#include <cstdint>

#include "synreg/image.hpp"
#include "synreg/json_io.hpp"
#include "synreg/rng.hpp"

namespace synreg {

/// Occlusion stand-in: a regular grid of square zeroed patches of side
/// unit_size * mask_ratio with stride unit_size and a random phase.
struct GridMaskConfig {
  int unit_size = 32;
  double mask_ratio = 0.4;
  double probability = 0.5;
};

struct BrightnessConfig {
  double max_delta = 0.2;
  double probability = 0.5;
};

struct AugmentConfig {
  bool enabled = true;
  GridMaskConfig grid_mask;
  BrightnessConfig brightness;
  std::uint64_t seed = 0;

  /// Throws ValidationError: mask_ratio in (0,1), max_delta in [0,1],
  /// probabilities in [0,1], unit_size >= 1.
  void validate() const;
};

Image grid_mask(const Image& img, const GridMaskConfig& cfg, Rng& rng);

/// img + delta, clamped to [0, 1].
Image shift_brightness(const Image& img, double delta);

/// Adds one uniform delta in [-max_delta, max_delta] to every pixel, then clamps to [0, 1].
Image brightness_jitter(const Image& img, const BrightnessConfig& cfg, Rng& rng);

/// Grid mask then brightness, each gated by its own probability.
Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng);

void to_json(Json& j, const AugmentConfig& c);
void from_json(const Json& j, AugmentConfig& c);

}  // namespace synreg
