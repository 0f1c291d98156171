#pragma once

#include <array>
#include <string>
#include <vector>

#include "json.hpp"

#include "irpert/image.hpp"

namespace irpert {

// Per-pixel CIELAB under sRGB primaries and the D65 white point.
LabImage rgb_to_lab(const RgbImage& img);

// Inverse conversion; out-of-gamut results are clamped to [0, 255].
RgbImage lab_to_rgb(const LabImage& img);

double mean_lightness(const LabImage& lab);
double mean_lightness(const RgbImage& img);

struct NormalizeResult {
  RgbImage image;
  // Lightness-scaled LAB before conversion back to RGB.
  LabImage lab;
  bool degenerate = false;
};

// Scales the L channel by target/mean(L) so the image's mean lightness
// equals `dataset_mean_l`; A and B stay untouched. An all-black image
// (mean L == 0) comes back unchanged with `degenerate` set.
NormalizeResult normalize_lightness(const RgbImage& img, double dataset_mean_l);

struct LuxLevel {
  double value = 0.0;

  explicit LuxLevel(double lux);
};

using RhoTriple = std::array<double, 3>;

struct MeasurementPair {
  RgbImage vis;  // ambient light only
  RgbImage ir;   // ambient + infrared source
  double lux = 0.0;
};

enum class CurveInterp { linear, expdecay };

// Channel-wise lux -> rho mapping. Knots are sorted by lux and the rho
// values are non-increasing; evaluation clamps outside the knot range.
class ScalingCurve {
 public:
  struct Knot {
    double lux;
    double rho;
  };

  ScalingCurve(std::array<std::vector<Knot>, 3> knots, CurveInterp interp = CurveInterp::linear);

  RhoTriple eval(double lux) const;
  const std::vector<Knot>& knots(int channel) const { return knots_[channel]; }
  CurveInterp interp() const { return interp_; }

  // a * exp(-b * lux) + c fitted per channel (only meaningful for expdecay).
  struct ExpFit {
    double a = 0, b = 0, c = 0;
  };
  const ExpFit& exp_fit(int channel) const { return fits_[channel]; }

  // Illustrative decay over 100..6000 lux used when no measurements are
  // supplied; red dominates and the effect fades with ambient light.
  static ScalingCurve builtin();

  nlohmann::json to_json() const;
  static ScalingCurve from_json(const nlohmann::json& doc);

 private:
  std::array<std::vector<Knot>, 3> knots_;
  CurveInterp interp_;
  std::array<ExpFit, 3> fits_{};
};

inline RhoTriple eval_rho(const ScalingCurve& curve, LuxLevel lux) { return curve.eval(lux.value); }

// Pixels with VIS_r below this level are ignored when estimating rho.
inline constexpr double kRedFloor = 10.0;

// Per-pixel rho_c = (IR_c - VIS_c) / VIS_r, median per pair, then a
// non-increasing curve through (lux, median) knots. Pairs without any pixel
// above the red floor are skipped; warnings collects a line per skip.
ScalingCurve estimate_rho(const std::vector<MeasurementPair>& pairs, CurveInterp interp = CurveInterp::linear,
                          std::vector<std::string>* warnings = nullptr);

// Median rho triple of a single pair; nullopt-like failure is signalled by
// returning false.
bool pair_median_rho(const MeasurementPair& pair, RhoTriple& out);

// IR_c = clamp(VIS_c + VIS_r * rho_c, 0, 255) for every pixel.
RgbImage apply_ir_transform(const RgbImage& img, const RhoTriple& rho);

}  // namespace irpert
