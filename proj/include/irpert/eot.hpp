#pragma once

#include <vector>

#include "json.hpp"
#include "irpert/image.hpp"
#include "irpert/perturbation.hpp"

namespace irpert {

struct EotConfig {
  int samples_per_candidate = 16;
  double perspective_deg = 35.0;  // +- tilt about each axis
  double rotation_deg = 6.0;
  // Sign size relative to the input, before the min-size floor.
  double scale_min = 0.33;
  double scale_max = 1.0;
  int min_size_px = 18;
  double brightness_pct = 20.0;
  double shift_px = 5.0;
  double blur_min_px = 1.0;
  double blur_max_px = 5.0;
  // Multiplicative rho jitter, +- fraction.
  double rho_jitter = 0.15;
  std::vector<RgbImage> backgrounds;

  void validate() const;
  // Every range collapsed onto the neutral value.
  static EotConfig identity();

  // Backgrounds are not serialized; the harness loads them from a directory.
  nlohmann::json to_json() const;
  static EotConfig from_json(const nlohmann::json& doc);
};

struct TransformSample {
  double tilt_x_deg = 0;  // perspective tilt about the horizontal axis
  double tilt_y_deg = 0;
  double rotation_deg = 0;
  double scale = 1;
  double brightness = 1;  // factor on L
  double dx = 0;
  double dy = 0;
  double blur_len = 1;
  double blur_angle = 0;  // radians in [0, pi)
  int background = -1;    // -1: the input serves as its own background
  double rho_scale = 1;

  friend bool operator==(const TransformSample&, const TransformSample&) = default;
};

TransformSample sample_transform(Rng& rng, const EotConfig& cfg);

// Where the sign sits in its frame: center plus the outline corner points
// used to measure its extent after warping.
struct SignGeometry {
  double cx = 0, cy = 0;
  std::vector<std::pair<double, double>> outline;
};

SignGeometry sign_geometry(const ObjectMask& mask);

struct TransformedImage {
  RgbImage image;
  BBox sign_bbox;          // extent of the warped outline
  double applied_scale;    // scale after the min-size floor
};

// Warps the sign layer (perspective, rotation, scale, shift in that order,
// one bilinear resample) over the background, then scales L by the
// brightness factor and applies the motion blur. The sign's shorter side
// is kept at or above min_size_px.
TransformedImage apply_transform(const RgbImage& img, const ObjectMask& mask, const SignGeometry& geom,
                                 const TransformSample& s, const RgbImage* background, int min_size_px);

// Box blur along a line; length 1 is the identity.
RgbImage motion_blur(const RgbImage& img, double length, double angle);

// Multiplies L by `factor`, clamped to [0, 100].
RgbImage scale_lightness(const RgbImage& img, double factor);

}  // namespace irpert
