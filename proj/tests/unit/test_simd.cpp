#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>

#include "irpert/simd/kernels.hpp"
#include "support.hpp"

using namespace irpert;
using namespace irpert::testing;

namespace {

std::vector<double> uniform(Gen& g, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(g);
  return v;
}

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("scalar ir_blend follows the gated formula") {
  const double r[] = {10, 200, 0, 255}, g[] = {20, 100, 50, 255}, b[] = {30, 0, 255, 255};
  const std::uint8_t mask[] = {0, 1, 0, 0};
  const double rho[3] = {1.0, 0.5, 0.25};
  double o[3][4];
  simd::scalar_kernels().ir_blend(r, g, b, mask, 4, rho, o[0], o[1], o[2]);
  CHECK(o[0][0] == 20);
  CHECK(o[1][0] == 25);
  CHECK(o[2][0] == 32.5);
  CHECK(o[0][1] == 200);  // blocked
  CHECK(o[1][1] == 100);
  CHECK(o[0][2] == 0);
  CHECK(o[2][2] == 255);
  CHECK(o[0][3] == 255);  // clamped
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const simd::Kernels* v = simd::avx2_kernels();
  if (!v) {
    MESSAGE("AVX2 variant unavailable on this machine; equivalence not exercised");
    return;
  }
  const simd::Kernels& s = simd::scalar_kernels();
  Gen gen(11);
  for (std::size_t n : {1u, 3u, 4u, 5u, 7u, 8u, 31u, 64u, 1023u, 4096u}) {
    CAPTURE(n);
    const auto r = uniform(gen, n, -20, 275), g = uniform(gen, n, -20, 275), b = uniform(gen, n, -20, 275);
    std::vector<std::uint8_t> mask(n);
    for (auto& m : mask) m = gen() & 1;
    const double rho[3] = {1.3, 0.4, 0.2};

    SUBCASE("ir_blend is bit-exact, with and without a mask") {
      for (const std::uint8_t* mp : {static_cast<const std::uint8_t*>(nullptr), static_cast<const std::uint8_t*>(mask.data())}) {
        std::vector<double> a(3 * n), c(3 * n);
        s.ir_blend(r.data(), g.data(), b.data(), mp, n, rho, a.data(), a.data() + n, a.data() + 2 * n);
        v->ir_blend(r.data(), g.data(), b.data(), mp, n, rho, c.data(), c.data() + n, c.data() + 2 * n);
        for (std::size_t i = 0; i < 3 * n; ++i) REQUIRE(bits_equal(a[i], c[i]));
      }
    }
    SUBCASE("ir_blend in place") {
      std::vector<double> r1 = r, g1 = g, b1 = b, r2 = r, g2 = g, b2 = b;
      s.ir_blend(r1.data(), g1.data(), b1.data(), mask.data(), n, rho, r1.data(), g1.data(), b1.data());
      v->ir_blend(r2.data(), g2.data(), b2.data(), mask.data(), n, rho, r2.data(), g2.data(), b2.data());
      CHECK(r1 == r2);
      CHECK(g1 == g2);
      CHECK(b1 == b2);
    }
    SUBCASE("squared_distance") {
      const double a = s.squared_distance(r.data(), g.data(), n);
      const double c = v->squared_distance(r.data(), g.data(), n);
      CHECK(c == doctest::Approx(a).epsilon(1e-12));
    }
    SUBCASE("rgb_to_lab within 1e-9") {
      const auto r8 = uniform(gen, n, 0, 255), g8 = uniform(gen, n, 0, 255), b8 = uniform(gen, n, 0, 255);
      std::vector<double> a(3 * n), c(3 * n);
      s.rgb_to_lab(r8.data(), g8.data(), b8.data(), n, a.data(), a.data() + n, a.data() + 2 * n);
      v->rgb_to_lab(r8.data(), g8.data(), b8.data(), n, c.data(), c.data() + n, c.data() + 2 * n);
      for (std::size_t i = 0; i < 3 * n; ++i) REQUIRE(std::abs(a[i] - c[i]) <= 1e-9);
    }
  }
  SUBCASE("sobel_magnitude within 1e-9, odd sizes included") {
    for (auto [w, h] : {std::pair{1, 1}, {3, 2}, {5, 7}, {17, 9}, {64, 33}}) {
      const auto p = uniform(gen, static_cast<std::size_t>(w * h), 0, 100);
      std::vector<double> a(p.size()), c(p.size());
      s.sobel_magnitude(p.data(), w, h, a.data());
      v->sobel_magnitude(p.data(), w, h, c.data());
      for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(std::abs(a[i] - c[i]) <= 1e-9);
    }
  }
}

TEST_CASE("runtime level selection") {
  const simd::Level before = simd::active().level;
  CHECK(simd::set_level(simd::Level::scalar));
  CHECK(simd::active().level == simd::Level::scalar);
  CHECK(simd::level_name(simd::Level::avx2) == "avx2");
  if (simd::avx2_kernels()) {
    CHECK(simd::set_level(simd::Level::avx2));
    CHECK(simd::active().level == simd::Level::avx2);
  } else {
    CHECK_FALSE(simd::set_level(simd::Level::avx2));
    CHECK(simd::active().level == simd::Level::scalar);
  }
  simd::set_level(before);
}
