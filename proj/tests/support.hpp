#pragma once

// Helpers shared by the unit tests and the acceptance binary: random inputs
// and small reference implementations written independently of src/.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "irpert/image.hpp"
#include "irpert/oracle.hpp"

namespace irpert::testing {

using Gen = std::mt19937_64;

inline RgbImage random_image(Gen& g, int w, int h, double lo = 0.0, double hi = 255.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  RgbImage img(w, h);
  for (double& v : img.raw()) v = d(g);
  return img;
}

// 8-bit levels only.
inline RgbImage random_image_u8(Gen& g, int w, int h) {
  std::uniform_int_distribution<int> d(0, 255);
  RgbImage img(w, h);
  for (double& v : img.raw()) v = d(g);
  return img;
}

template <class M>
M random_mask(Gen& g, int w, int h, double p = 0.5) {
  std::bernoulli_distribution d(p);
  M m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, d(g));
  return m;
}

// Random point of the simplex (Dirichlet(1)).
inline std::vector<double> random_simplex(Gen& g, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double s = 0;
  for (double& v : p) s += (v = e(g));
  for (double& v : p) v /= s;
  return p;
}

inline bool unique_argmax(const std::vector<double>& p) {
  const double m = *std::max_element(p.begin(), p.end());
  return std::count(p.begin(), p.end(), m) == 1;
}

// CIELAB from the CIE definitions: sRGB decoding, the sRGB to XYZ matrix,
// and the piecewise cube root in its kappa form (kappa = 24389/27).
inline std::array<double, 3> reference_lab(double r8, double g8, double b8) {
  auto lin = [](double v) {
    v /= 255.0;
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
  };
  const double r = lin(r8), g = lin(g8), b = lin(b8);
  const double X = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double Y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double Z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double eps = 216.0 / 24389.0, kappa = 24389.0 / 27.0;
  auto f = [&](double t) { return t > eps ? std::cbrt(t) : (kappa * t + 16.0) / 116.0; };
  const double fx = f(X / 0.95047), fy = f(Y / 1.0), fz = f(Z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline double max_abs_diff(const RgbImage& a, const RgbImage& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.raw().size(); ++i) m = std::max(m, std::abs(a.raw()[i] - b.raw()[i]));
  return m;
}

// Branch form of the gated transform, one pixel at a time.
inline RgbImage reference_apply_ir(const RgbImage& x, const ProjectionMask& p, const std::array<double, 3>& rho) {
  RgbImage out(x.width(), x.height());
  for (int y = 0; y < x.height(); ++y)
    for (int xx = 0; xx < x.width(); ++xx) {
      const double vr = x.at(xx, y, 0);
      for (int c = 0; c < 3; ++c) {
        const double v = x.at(xx, y, c);
        out.at(xx, y, c) = p.get(xx, y) ? v : std::clamp(v + vr * rho[c], 0.0, 255.0);
      }
    }
  return out;
}

// Fixed-output oracle for exercising callers.
class ConstantOracle final : public Oracle {
 public:
  explicit ConstantOracle(std::vector<double> p) : p_(std::move(p)) {}
  bool supports(Capability cap) const override { return cap == Capability::classify; }
  ProbSimplex classify(const RgbImage&) const override { return ProbSimplex(p_); }

 private:
  std::vector<double> p_;
};

}  // namespace irpert::testing
