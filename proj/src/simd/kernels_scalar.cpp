#include <algorithm>
#include <cmath>

#include "irpert/simd/kernels.hpp"
#include "kernels_common.hpp"

namespace irpert::simd {
namespace {

void ir_blend_scalar(const double* r, const double* g, const double* b, const std::uint8_t* mask,
                     std::size_t n, const double rho[3], double* out_r, double* out_g, double* out_b) {
  for (std::size_t i = 0; i < n; ++i) {
    const double vr = r[i], vg = g[i], vb = b[i];
    if (mask && mask[i]) {
      out_r[i] = vr;
      out_g[i] = vg;
      out_b[i] = vb;
      continue;
    }
    out_r[i] = std::min(std::max(vr + vr * rho[0], 0.0), 255.0);
    out_g[i] = std::min(std::max(vg + vr * rho[1], 0.0), 255.0);
    out_b[i] = std::min(std::max(vb + vr * rho[2], 0.0), 255.0);
  }
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double linearize(double v) {
  const double c = std::min(std::max(v, 0.0), 255.0) / 255.0;
  return c <= detail::kSrgbKnee ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  return t > detail::kLabEpsilon ? std::cbrt(t) : t * detail::kLabSlope + 4.0 / 29.0;
}

void rgb_to_lab_scalar(const double* r, const double* g, const double* b, std::size_t n,
                       double* out_l, double* out_a, double* out_b) {
  using namespace detail;
  for (std::size_t i = 0; i < n; ++i) {
    const double lr = linearize(r[i]), lg = linearize(g[i]), lb = linearize(b[i]);
    const double x = (kM[0][0] * lr + kM[0][1] * lg + kM[0][2] * lb) / kWhiteX;
    const double y = (kM[1][0] * lr + kM[1][1] * lg + kM[1][2] * lb) / kWhiteY;
    const double z = (kM[2][0] * lr + kM[2][1] * lg + kM[2][2] * lb) / kWhiteZ;
    const double fx = lab_f(x), fy = lab_f(y), fz = lab_f(z);
    out_l[i] = 116.0 * fy - 16.0;
    out_a[i] = 500.0 * (fx - fy);
    out_b[i] = 200.0 * (fy - fz);
  }
}

void sobel_magnitude_scalar(const double* p, int width, int height, double* out) {
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out[static_cast<std::size_t>(y) * width + x] = detail::sobel_at(p, width, height, x, y);
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels table{Level::scalar,         "scalar",          ir_blend_scalar,
                             squared_distance_scalar, rgb_to_lab_scalar, sobel_magnitude_scalar};
  return table;
}

}  // namespace irpert::simd
