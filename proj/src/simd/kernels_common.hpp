#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace irpert::simd::detail {

// sRGB primaries, D65 reference white (IEC 61966-2-1).
inline constexpr double kM[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};
inline constexpr double kWhiteX = 0.95047;
inline constexpr double kWhiteY = 1.00000;
inline constexpr double kWhiteZ = 1.08883;

inline constexpr double kSrgbKnee = 0.04045;
// (6/29)^3 and 1 / (3 (6/29)^2)
inline constexpr double kLabEpsilon = 216.0 / 24389.0;
inline constexpr double kLabSlope = 841.0 / 108.0;


// One Sobel magnitude sample with replicated borders. Shared by every
// variant so border pixels round identically.
inline double sobel_at(const double* p, int width, int height, int x, int y) {
  auto at = [&](int xx, int yy) {
    xx = std::clamp(xx, 0, width - 1);
    yy = std::clamp(yy, 0, height - 1);
    return p[static_cast<std::size_t>(yy) * width + xx];
  };
  const double gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)) -
                    (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
  const double gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)) -
                    (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
  return std::sqrt(gx * gx + gy * gy);
}

}  // namespace irpert::simd::detail
