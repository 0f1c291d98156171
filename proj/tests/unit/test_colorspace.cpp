#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "irpert/colorspace.hpp"
#include "support.hpp"

using namespace irpert;
using namespace irpert::testing;

namespace {

RgbImage pixel(double r, double g, double b) {
  RgbImage img(1, 1);
  img.at(0, 0, 0) = r;
  img.at(0, 0, 1) = g;
  img.at(0, 0, 2) = b;
  return img;
}

}  // namespace

TEST_CASE("LAB of reference colors") {
  const LabImage white = rgb_to_lab(pixel(255, 255, 255));
  CHECK(white.at(0, 0, 0) == doctest::Approx(100.0).epsilon(1e-6));
  CHECK(std::abs(white.at(0, 0, 1)) < 1e-3);
  CHECK(std::abs(white.at(0, 0, 2)) < 1e-3);
  const LabImage black = rgb_to_lab(pixel(0, 0, 0));
  CHECK(black.at(0, 0, 0) == doctest::Approx(0.0));
  // Commonly tabulated sRGB red: L 53.24, a 80.09, b 67.20.
  const LabImage red = rgb_to_lab(pixel(255, 0, 0));
  CHECK(red.at(0, 0, 0) == doctest::Approx(53.24).epsilon(1e-3));
  CHECK(red.at(0, 0, 1) == doctest::Approx(80.09).epsilon(1e-3));
  CHECK(red.at(0, 0, 2) == doctest::Approx(67.20).epsilon(1e-3));
}

TEST_CASE("LAB matches an independent implementation") {
  Gen g(1);
  const RgbImage img = random_image(g, 40, 25);
  const LabImage lab = rgb_to_lab(img);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const auto ref = reference_lab(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
      for (int c = 0; c < 3; ++c) REQUIRE(std::abs(lab.at(x, y, c) - ref[c]) < 1e-9);
    }
}

TEST_CASE("LAB roundtrip stays within one 8-bit level") {
  Gen g(2);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const RgbImage img = random_image(g, 16, 16);
    const RgbImage back = lab_to_rgb(rgb_to_lab(img));
    for (std::size_t j = 0; j < img.raw().size(); ++j) worst = std::max(worst, std::abs(img.raw()[j] - back.raw()[j]));
  }
  CHECK(worst <= 1.0 / 255.0);
}

TEST_CASE("normalize_lightness") {
  Gen g(3);
  SUBCASE("hits the target mean and leaves A, B alone") {
    for (double target : {20.0, 45.0, 70.0}) {
      const RgbImage img = random_image(g, 20, 20, 30, 220);
      const LabImage before = rgb_to_lab(img);
      const NormalizeResult r = normalize_lightness(img, target);
      CHECK_FALSE(r.degenerate);
      CHECK(std::abs(mean_lightness(r.lab) - target) < 1e-3);
      for (int c = 1; c < 3; ++c)
        for (std::size_t i = 0; i < before.pixel_count(); ++i) REQUIRE(r.lab.plane(c)[i] == before.plane(c)[i]);
    }
  }
  SUBCASE("scales L by target / mean") {
    const RgbImage img = random_image(g, 8, 8, 50, 200);
    const LabImage before = rgb_to_lab(img);
    const double m = mean_lightness(before);
    const NormalizeResult r = normalize_lightness(img, 40.0);
    for (std::size_t i = 0; i < before.pixel_count(); ++i)
      CHECK(r.lab.plane(0)[i] == doctest::Approx(before.plane(0)[i] * 40.0 / m).epsilon(1e-12));
  }
  SUBCASE("all-black image is degenerate and unchanged") {
    const RgbImage black(4, 4, 0.0);
    const NormalizeResult r = normalize_lightness(black, 50.0);
    CHECK(r.degenerate);
    CHECK(r.image == black);
  }
  SUBCASE("target outside (0, 100] is rejected") {
    CHECK_THROWS_AS(normalize_lightness(RgbImage(2, 2, 100.0), 0.0), DataError);
    CHECK_THROWS_AS(normalize_lightness(RgbImage(2, 2, 100.0), 120.0), DataError);
  }
}

TEST_CASE("apply_ir_transform equals the per-pixel formula") {
  Gen g(4);
  std::uniform_real_distribution<double> rd(0.0, 2.0);
  const RgbImage img = random_image(g, 50, 20);
  const RhoTriple rho{rd(g), rd(g), rd(g)};
  const RgbImage out = apply_ir_transform(img, rho);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const double raw = img.at(x, y, c) + img.at(x, y, 0) * rho[c];
        REQUIRE(out.at(x, y, c) == std::clamp(raw, 0.0, 255.0));
      }
}

TEST_CASE("apply_ir_transform edge cases") {
  CHECK(apply_ir_transform(pixel(0, 0, 0), {5, 5, 5}) == pixel(0, 0, 0));
  CHECK(apply_ir_transform(pixel(100, 50, 20), {0, 0, 0}) == pixel(100, 50, 20));
  CHECK(apply_ir_transform(pixel(200, 10, 10), {1, 0, 0}) == pixel(255, 10, 10));
  CHECK_THROWS_AS(apply_ir_transform(pixel(1, 1, 1), {-0.1, 0, 0}), DataError);
}

TEST_CASE("built-in scaling curve") {
  const ScalingCurve c = ScalingCurve::builtin();
  const RhoTriple at100 = c.eval(100);
  CHECK(at100[0] == 1.0);
  CHECK(at100[1] == 0.32);
  CHECK(at100[2] == 0.20);
  CHECK(c.eval(10) == at100);  // below the first knot
  CHECK(c.eval(1e6) == c.eval(6000));
  const RhoTriple mid = c.eval(550);
  CHECK(mid[0] == doctest::Approx((1.00 + 0.92) / 2));
  // The lux axis used for the monotonicity run spans a factor of 5 or more.
  const RhoTriple hi = c.eval(5000);
  for (int ch = 0; ch < 3; ++ch) CHECK(at100[ch] >= 5 * hi[ch]);
  RhoTriple prev = c.eval(1);
  for (double lux = 10; lux < 7000; lux += 37) {
    const RhoTriple r = c.eval(lux);
    for (int ch = 0; ch < 3; ++ch) REQUIRE(r[ch] <= prev[ch]);
    prev = r;
  }
  CHECK_THROWS_AS(LuxLevel(0), DataError);
}

TEST_CASE("scaling curve validation and json") {
  using K = ScalingCurve::Knot;
  const std::array<std::vector<K>, 3> rising{{{{100, 0.1}, {200, 0.2}}, {{100, 0.1}}, {{100, 0.1}}}};
  CHECK_THROWS_AS(ScalingCurve{rising}, DataError);
  const std::array<std::vector<K>, 3> dup{{{{100, 0.2}, {100, 0.1}}, {{100, 0.1}}, {{100, 0.1}}}};
  CHECK_THROWS_AS(ScalingCurve{dup}, DataError);
  const std::array<std::vector<K>, 3> none{{{}, {{100, 0.1}}, {{100, 0.1}}}};
  CHECK_THROWS_AS(ScalingCurve{none}, DataError);

  const ScalingCurve b = ScalingCurve::builtin();
  const ScalingCurve back = ScalingCurve::from_json(b.to_json());
  for (double lux : {10.0, 777.0, 2500.0, 9000.0}) CHECK(back.eval(lux) == b.eval(lux));
  CHECK_THROWS_AS(ScalingCurve::from_json(nlohmann::json{{"channels", 3}}), DataError);
}

TEST_CASE("exponential-decay curve passes near its knots") {
  using K = ScalingCurve::Knot;
  std::vector<K> ks;
  for (double lux : {100.0, 1000.0, 2000.0, 4000.0, 6000.0}) ks.push_back({lux, 0.9 * std::exp(-lux / 1500.0) + 0.05});
  const ScalingCurve c({ks, ks, ks}, CurveInterp::expdecay);
  for (const auto& k : ks) CHECK(c.eval(k.lux)[0] == doctest::Approx(k.rho).epsilon(1e-3));
  CHECK(c.exp_fit(0).b == doctest::Approx(1.0 / 1500.0).epsilon(1e-2));
}

TEST_CASE("estimate_rho recovers the generating triple") {
  Gen g(5);
  std::vector<MeasurementPair> pairs;
  const std::vector<std::pair<double, RhoTriple>> truth{{100, {0.8, 0.3, 0.1}}, {1000, {0.5, 0.2, 0.05}},
                                                       {3000, {0.2, 0.1, 0.02}}};
  for (const auto& [lux, rho] : truth) {
    const RgbImage vis = random_image(g, 12, 12, 20, 90);
    RgbImage ir = vis;
    for (int y = 0; y < 12; ++y)
      for (int x = 0; x < 12; ++x)
        for (int c = 0; c < 3; ++c) ir.at(x, y, c) = vis.at(x, y, c) + vis.at(x, y, 0) * rho[c];
    pairs.push_back({vis, ir, lux});
  }
  const ScalingCurve c = estimate_rho(pairs);
  for (const auto& [lux, rho] : truth)
    for (int ch = 0; ch < 3; ++ch) CHECK(c.eval(lux)[ch] == doctest::Approx(rho[ch]).epsilon(1e-9));

  SUBCASE("dark pairs are skipped with a warning") {
    pairs.push_back({RgbImage(4, 4, 1.0), RgbImage(4, 4, 1.0), 5000});
    std::vector<std::string> warnings;
    const ScalingCurve c2 = estimate_rho(pairs, CurveInterp::linear, &warnings);
    CHECK(warnings.size() == 1);
    CHECK(c2.knots(0).size() == 3);
  }
  SUBCASE("one usable lux level is not enough") {
    pairs.resize(1);
    CHECK_THROWS_AS(estimate_rho(pairs), DataError);
  }
  SUBCASE("a rising median is pooled into a non-increasing curve") {
    std::swap(pairs[0].lux, pairs[2].lux);
    const ScalingCurve c3 = estimate_rho(pairs);
    const auto& k = c3.knots(0);
    for (std::size_t i = 1; i < k.size(); ++i) CHECK(k[i].rho <= k[i - 1].rho);
  }
}

TEST_CASE("quantize rounds half up and clamps") {
  CHECK(quantize(-3) == 0);
  CHECK(quantize(0.49) == 0);
  CHECK(quantize(0.5) == 1);
  CHECK(quantize(254.6) == 255);
  CHECK(quantize(900) == 255);
}

TEST_CASE("lab_to_rgb of reference colors") {
  LabImage lab(1, 1);
  lab.at(0, 0, 0) = 100;
  RgbImage rgb = lab_to_rgb(lab);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(rgb.at(0, 0, c) - 255) <= 1);
  lab.at(0, 0, 0) = 53.24;
  lab.at(0, 0, 1) = 80.09;
  lab.at(0, 0, 2) = 67.20;
  rgb = lab_to_rgb(lab);
  CHECK(std::abs(rgb.at(0, 0, 0) - 255) <= 1);
  CHECK(std::abs(rgb.at(0, 0, 1)) <= 1);
  CHECK(std::abs(rgb.at(0, 0, 2)) <= 1);
}

TEST_CASE("uniform gray at L=40 normalized to 80") {
  // Gray level whose lightness is 40, found by bisection on the reference.
  double lo = 0, hi = 255;
  for (int i = 0; i < 80; ++i) {
    const double mid = (lo + hi) / 2;
    (reference_lab(mid, mid, mid)[0] < 40 ? lo : hi) = mid;
  }
  const RgbImage gray(6, 6, lo);
  const NormalizeResult r = normalize_lightness(gray, 80);
  const LabImage out = rgb_to_lab(r.image);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    CHECK(out.plane(0)[i] == doctest::Approx(80).epsilon(1e-6));
    CHECK(std::abs(out.plane(1)[i]) < 1e-4);
  }
  // Already at the target: unchanged within the roundtrip tolerance.
  const RgbImage same = normalize_lightness(gray, 40).image;
  for (double v : same.raw()) CHECK(std::abs(v - lo) <= 1.0 / 255);
}

TEST_CASE("hand-evaluated rho and transform") {
  CHECK(apply_ir_transform(pixel(100, 50, 25), {0.5, 0.2, 0.1}) == pixel(150, 70, 35));
  RhoTriple rho{};
  REQUIRE(pair_median_rho({pixel(100, 50, 25), pixel(150, 70, 35), 100}, rho));
  CHECK(rho[0] == doctest::Approx(0.5));
  CHECK(rho[1] == doctest::Approx(0.2));
  CHECK(rho[2] == doctest::Approx(0.1));
  REQUIRE(pair_median_rho({pixel(100, 50, 25), pixel(100, 50, 25), 100}, rho));
  CHECK(rho == RhoTriple{0, 0, 0});
  // Zero red shifts nothing.
  CHECK(apply_ir_transform(pixel(0, 80, 90), {3, 3, 3}) == pixel(0, 80, 90));
}

TEST_CASE("two lux levels give a curve through both medians") {
  auto uniform_pair = [](RhoTriple rho, double lux) {
    RgbImage vis(3, 3);
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        vis.at(x, y, 0) = 100;
        vis.at(x, y, 1) = 50;
        vis.at(x, y, 2) = 25;
      }
    return MeasurementPair{vis, apply_ir_transform(vis, rho), lux};
  };
  const ScalingCurve c = estimate_rho({uniform_pair({0.5, 0.2, 0.1}, 100), uniform_pair({0.25, 0.1, 0.05}, 2000)});
  const RhoTriple a = c.eval(100), b = c.eval(2000);
  CHECK(a[0] == doctest::Approx(0.5));
  CHECK(a[2] == doctest::Approx(0.1));
  CHECK(b[0] == doctest::Approx(0.25));
  CHECK(b[1] == doctest::Approx(0.1));
}
