#pragma once

// Data-parallel inner loops with a scalar reference implementation and
// vectorized variants chosen at runtime. Every variant must agree with the
// scalar kernels (bit-exact for the blend/clamp kernels, within 1e-9 for
// the transcendental ones); tests/unit/test_simd.cpp holds them to it.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace irpert::simd {

enum class Level { scalar, avx2 };

struct Kernels {
  Level level;
  const char* name;

  // out_c = mask ? in_c : clamp(in_c + in_r * rho_c, 0, 255), per plane.
  // mask may be null (treated as all zeros). out may alias in.
  void (*ir_blend)(const double* r, const double* g, const double* b, const std::uint8_t* mask,
                   std::size_t n, const double rho[3], double* out_r, double* out_g, double* out_b);

  // sum_i (a_i - b_i)^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);

  // Planar sRGB [0,255] -> CIELAB (D65). Output planes may not alias input.
  void (*rgb_to_lab)(const double* r, const double* g, const double* b, std::size_t n,
                     double* out_l, double* out_a, double* out_b);

  // Sobel gradient magnitude with replicated borders.
  void (*sobel_magnitude)(const double* plane, int width, int height, double* out);
};

const Kernels& scalar_kernels();

// Null when the variant was not compiled in or the CPU lacks the features.
const Kernels* avx2_kernels();

// Kernels for the active level. The level is picked on first use from CPU
// features, overridable with IRPERT_SIMD=scalar|avx2.
const Kernels& active();

// Forces a level; returns false (and changes nothing) if unavailable.
bool set_level(Level level);

std::string_view level_name(Level level);

}  // namespace irpert::simd
