// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "irpert/simd/kernels.hpp"
#include "kernels_common.hpp"

namespace irpert::simd {
namespace {

inline __m256d clamp255(__m256d v) {
  return _mm256_min_pd(_mm256_max_pd(v, _mm256_setzero_pd()), _mm256_set1_pd(255.0));
}

void ir_blend_avx2(const double* r, const double* g, const double* b, const std::uint8_t* mask,
                   std::size_t n, const double rho[3], double* out_r, double* out_g, double* out_b) {
  const __m256d rr = _mm256_set1_pd(rho[0]);
  const __m256d rg = _mm256_set1_pd(rho[1]);
  const __m256d rb = _mm256_set1_pd(rho[2]);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vr = _mm256_loadu_pd(r + i);
    const __m256d vg = _mm256_loadu_pd(g + i);
    const __m256d vb = _mm256_loadu_pd(b + i);
    // Separate mul and add: must round exactly like the scalar kernel.
    __m256d ir = clamp255(_mm256_add_pd(vr, _mm256_mul_pd(vr, rr)));
    __m256d ig = clamp255(_mm256_add_pd(vg, _mm256_mul_pd(vr, rg)));
    __m256d ib = clamp255(_mm256_add_pd(vb, _mm256_mul_pd(vr, rb)));
    if (mask) {
      std::int32_t m4;
      std::memcpy(&m4, mask + i, sizeof(m4));
      const __m256i wide = _mm256_cvtepu8_epi64(_mm_cvtsi32_si128(m4));
      const __m256d keep =
          _mm256_castsi256_pd(_mm256_cmpgt_epi64(wide, _mm256_setzero_si256()));
      ir = _mm256_blendv_pd(ir, vr, keep);
      ig = _mm256_blendv_pd(ig, vg, keep);
      ib = _mm256_blendv_pd(ib, vb, keep);
    }
    _mm256_storeu_pd(out_r + i, ir);
    _mm256_storeu_pd(out_g + i, ig);
    _mm256_storeu_pd(out_b + i, ib);
  }
  if (i < n)
    scalar_kernels().ir_blend(r + i, g + i, b + i, mask ? mask + i : nullptr, n - i, rho, out_r + i,
                              out_g + i, out_b + i);
}

double squared_distance_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// u^2.4 for u in roughly [0.04, 1.06]: Newton on y^5 = u^2 from a linear
// start; seven steps take the worst-case start error below 1 ulp.
inline __m256d pow24(__m256d u) {
  const __m256d u2 = _mm256_mul_pd(u, u);
  const __m256d fifth = _mm256_set1_pd(0.2);
  const __m256d four = _mm256_set1_pd(4.0);
  __m256d y = _mm256_fmadd_pd(u, _mm256_set1_pd(0.7), _mm256_set1_pd(0.3));
  for (int it = 0; it < 7; ++it) {
    const __m256d y2 = _mm256_mul_pd(y, y);
    const __m256d y4 = _mm256_mul_pd(y2, y2);
    y = _mm256_mul_pd(_mm256_add_pd(_mm256_mul_pd(four, y), _mm256_div_pd(u2, y4)), fifth);
  }
  // u^2.4 = u^2 * u^0.4
  return _mm256_mul_pd(u2, y);
}

inline __m256d linearize(__m256d v) {
  const __m256d c = _mm256_div_pd(clamp255(v), _mm256_set1_pd(255.0));
  const __m256d low = _mm256_div_pd(c, _mm256_set1_pd(12.92));
  const __m256d u = _mm256_div_pd(_mm256_add_pd(c, _mm256_set1_pd(0.055)), _mm256_set1_pd(1.055));
  const __m256d high = pow24(u);
  const __m256d is_low = _mm256_cmp_pd(c, _mm256_set1_pd(detail::kSrgbKnee), _CMP_LE_OQ);
  return _mm256_blendv_pd(high, low, is_low);
}

// cbrt for t in [eps, ~1.1]; lanes at or below eps take the linear branch.
inline __m256d lab_f(__m256d t) {
  const __m256d third = _mm256_set1_pd(1.0 / 3.0);
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d eps = _mm256_set1_pd(detail::kLabEpsilon);
  const __m256d tc = _mm256_max_pd(t, eps);
  __m256d y = _mm256_fmadd_pd(tc, _mm256_set1_pd(0.65), _mm256_set1_pd(0.35));
  for (int it = 0; it < 8; ++it) {
    const __m256d y2 = _mm256_mul_pd(y, y);
    y = _mm256_mul_pd(_mm256_add_pd(_mm256_mul_pd(two, y), _mm256_div_pd(tc, y2)), third);
  }
  const __m256d lin =
      _mm256_add_pd(_mm256_mul_pd(t, _mm256_set1_pd(detail::kLabSlope)), _mm256_set1_pd(4.0 / 29.0));
  return _mm256_blendv_pd(lin, y, _mm256_cmp_pd(t, eps, _CMP_GT_OQ));
}

void rgb_to_lab_avx2(const double* r, const double* g, const double* b, std::size_t n,
                     double* out_l, double* out_a, double* out_b) {
  using namespace detail;
  auto row = [](int k, __m256d lr, __m256d lg, __m256d lb, double white) {
    __m256d acc = _mm256_mul_pd(_mm256_set1_pd(kM[k][0]), lr);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(kM[k][1]), lg));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(kM[k][2]), lb));
    return _mm256_div_pd(acc, _mm256_set1_pd(white));
  };
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d lr = linearize(_mm256_loadu_pd(r + i));
    const __m256d lg = linearize(_mm256_loadu_pd(g + i));
    const __m256d lb = linearize(_mm256_loadu_pd(b + i));
    const __m256d fx = lab_f(row(0, lr, lg, lb, kWhiteX));
    const __m256d fy = lab_f(row(1, lr, lg, lb, kWhiteY));
    const __m256d fz = lab_f(row(2, lr, lg, lb, kWhiteZ));
    _mm256_storeu_pd(out_l + i, _mm256_sub_pd(_mm256_mul_pd(_mm256_set1_pd(116.0), fy),
                                              _mm256_set1_pd(16.0)));
    _mm256_storeu_pd(out_a + i, _mm256_mul_pd(_mm256_set1_pd(500.0), _mm256_sub_pd(fx, fy)));
    _mm256_storeu_pd(out_b + i, _mm256_mul_pd(_mm256_set1_pd(200.0), _mm256_sub_pd(fy, fz)));
  }
  if (i < n) scalar_kernels().rgb_to_lab(r + i, g + i, b + i, n - i, out_l + i, out_a + i, out_b + i);
}

void sobel_magnitude_avx2(const double* p, int width, int height, double* out) {
  if (width < 6 || height < 3) {
    scalar_kernels().sobel_magnitude(p, width, height, out);
    return;
  }
  auto border = [&](int x, int y) {
    out[static_cast<std::size_t>(y) * width + x] = detail::sobel_at(p, width, height, x, y);
  };
  for (int x = 0; x < width; ++x) {
    border(x, 0);
    border(x, height - 1);
  }
  const __m256d two = _mm256_set1_pd(2.0);
  for (int y = 1; y + 1 < height; ++y) {
    const double* up = p + static_cast<std::size_t>(y - 1) * width;
    const double* mid = p + static_cast<std::size_t>(y) * width;
    const double* dn = p + static_cast<std::size_t>(y + 1) * width;
    double* o = out + static_cast<std::size_t>(y) * width;
    int x = 1;
    for (; x + 4 <= width - 1; x += 4) {
      const __m256d ul = _mm256_loadu_pd(up + x - 1), uc = _mm256_loadu_pd(up + x),
                    ur = _mm256_loadu_pd(up + x + 1);
      const __m256d ml = _mm256_loadu_pd(mid + x - 1), mr = _mm256_loadu_pd(mid + x + 1);
      const __m256d dl = _mm256_loadu_pd(dn + x - 1), dc = _mm256_loadu_pd(dn + x),
                    dr = _mm256_loadu_pd(dn + x + 1);
      const __m256d gx = _mm256_sub_pd(_mm256_add_pd(_mm256_add_pd(ur, _mm256_mul_pd(two, mr)), dr),
                                       _mm256_add_pd(_mm256_add_pd(ul, _mm256_mul_pd(two, ml)), dl));
      const __m256d gy = _mm256_sub_pd(_mm256_add_pd(_mm256_add_pd(dl, _mm256_mul_pd(two, dc)), dr),
                                       _mm256_add_pd(_mm256_add_pd(ul, _mm256_mul_pd(two, uc)), ur));
      _mm256_storeu_pd(o + x, _mm256_sqrt_pd(_mm256_add_pd(_mm256_mul_pd(gx, gx), _mm256_mul_pd(gy, gy))));
    }
    for (; x < width - 1; ++x) border(x, y);
    border(0, y);
    border(width - 1, y);
  }
}

}  // namespace

const Kernels& avx2_table() {
  static const Kernels table{Level::avx2,          "avx2",          ir_blend_avx2,
                             squared_distance_avx2, rgb_to_lab_avx2, sobel_magnitude_avx2};
  return table;
}

}  // namespace irpert::simd
