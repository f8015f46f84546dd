#include "synreg/augment.hpp"

#include <algorithm>
#include <cmath>

namespace synreg {

void AugmentConfig::validate() const {
  if (grid_mask.unit_size < 1) throw ValidationError("augment.grid_mask.unit_size must be >= 1");
  if (!(grid_mask.mask_ratio > 0.0 && grid_mask.mask_ratio < 1.0)) {
    throw ValidationError("augment.grid_mask.mask_ratio must lie in (0, 1)");
  }
  if (!(brightness.max_delta >= 0.0 && brightness.max_delta <= 1.0)) {
    throw ValidationError("augment.brightness.max_delta must lie in [0, 1]");
  }
  for (double p : {grid_mask.probability, brightness.probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("augment probabilities must lie in [0, 1]");
  }
}

Image grid_mask(const Image& img, const GridMaskConfig& cfg, Rng& rng) {
  const double gate = uniform(rng, 0.0, 1.0);
  const int unit = cfg.unit_size;
  std::uniform_int_distribution<int> phase(0, unit - 1);
  const int ox = phase(rng), oy = phase(rng);
  if (!(gate < cfg.probability)) return img;

  const int side = std::clamp(static_cast<int>(std::lround(unit * cfg.mask_ratio)), 1, unit);
  Image out = img;
  auto wrap = [unit](int v) { return ((v % unit) + unit) % unit; };
  for (int y = 0; y < img.height; ++y) {
    if (wrap(y - oy) >= side) continue;
    for (int x = 0; x < img.width; ++x) {
      if (wrap(x - ox) < side) out.at(x, y) = 0.0f;
    }
  }
  return out;
}

Image shift_brightness(const Image& img, double delta) {
  Image out = img;
  const auto d = static_cast<float>(delta);
  for (auto& p : out.pixels) p = std::clamp(p + d, 0.0f, 1.0f);
  return out;
}

Image brightness_jitter(const Image& img, const BrightnessConfig& cfg, Rng& rng) {
  const double gate = uniform(rng, 0.0, 1.0);
  const double delta = uniform(rng, -cfg.max_delta, cfg.max_delta);
  if (!(gate < cfg.probability) || cfg.max_delta == 0.0) return img;
  return shift_brightness(img, delta);
}

Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return img;
  return brightness_jitter(grid_mask(img, cfg.grid_mask, rng), cfg.brightness, rng);
}

void to_json(Json& j, const AugmentConfig& c) {
  j = Json{{"enabled", c.enabled},
           {"grid_mask",
            {{"unit_size", c.grid_mask.unit_size},
             {"mask_ratio", c.grid_mask.mask_ratio},
             {"probability", c.grid_mask.probability}}},
           {"brightness", {{"max_delta", c.brightness.max_delta}, {"probability", c.brightness.probability}}},
           {"seed", c.seed}};
}

void from_json(const Json& j, AugmentConfig& c) {
  StrictReader(j, "augment")
      .opt("enabled", c.enabled)
      .with("grid_mask",
            [&](const Json& g) {
              StrictReader(g, "augment.grid_mask")
                  .opt("unit_size", c.grid_mask.unit_size)
                  .opt("mask_ratio", c.grid_mask.mask_ratio)
                  .opt("probability", c.grid_mask.probability)
                  .finish();
            })
      .with("brightness",
            [&](const Json& b) {
              StrictReader(b, "augment.brightness")
                  .opt("max_delta", c.brightness.max_delta)
                  .opt("probability", c.brightness.probability)
                  .finish();
            })
      .opt("seed", c.seed)
      .finish();
}

}  // namespace synreg
