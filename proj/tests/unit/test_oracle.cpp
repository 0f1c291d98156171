#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "irpert/colorspace.hpp"
#include "irpert/dataset.hpp"
#include "irpert/harness/harness.hpp"
#include "support.hpp"

using namespace irpert;
using namespace irpert::testing;

namespace {

LabImage lab_pixel(double l, double a, double b) {
  LabImage img(1, 1);
  img.at(0, 0, 0) = l;
  img.at(0, 0, 1) = a;
  img.at(0, 0, 2) = b;
  return img;
}

}  // namespace

TEST_CASE("ProbSimplex validation") {
  CHECK_THROWS_AS(ProbSimplex({1.0}), ProtocolError);
  CHECK_THROWS_AS(ProbSimplex({0.5, 0.6}), ProtocolError);
  CHECK_THROWS_AS(ProbSimplex({1.5, -0.5}), ProtocolError);
  CHECK_THROWS_AS(ProbSimplex({std::nan(""), 1.0}), ProtocolError);
  const ProbSimplex p({0.2, 0.4, 0.4});
  CHECK(p.argmax() == 1);  // lowest index among ties
  CHECK(p.max() == 0.4);
  CHECK(ProbSimplex({0.5, 0.5 + 1e-7}).size() == 2);
}

TEST_CASE("softmax over distances, hand-evaluated") {
  // Distances 0, 10, 20 at T = 10 give softmax(0, -1, -2).
  const RgbImage img(1, 1, 128.0);
  const LabImage base = rgb_to_lab(img);
  const double l = base.at(0, 0, 0), a = base.at(0, 0, 1), b = base.at(0, 0, 2);
  const CentroidModel m({lab_pixel(l, a, b), lab_pixel(l, a + 10, b), lab_pixel(l, a, b + 20)}, 10.0);
  const auto d = m.distances(img);
  CHECK(d[0] == doctest::Approx(0).epsilon(1e-12));
  CHECK(d[1] == doctest::Approx(10));
  CHECK(d[2] == doctest::Approx(20));
  const ProbSimplex p = m.classify(img);
  const double z = 1 + std::exp(-1.0) + std::exp(-2.0);
  CHECK(p[0] == doctest::Approx(1 / z));
  CHECK(p[1] == doctest::Approx(std::exp(-1.0) / z));
  CHECK(p[2] == doctest::Approx(std::exp(-2.0) / z));
  CHECK(p[0] == doctest::Approx(0.665).epsilon(1e-3));
  CHECK(p[1] == doctest::Approx(0.245).epsilon(1e-3));
  CHECK(p[2] == doctest::Approx(0.090).epsilon(1e-2));
}

TEST_CASE("distance is the RMS per-pixel LAB distance") {
  Gen g(3);
  const RgbImage img = random_image(g, 5, 4);
  const RgbImage c0 = random_image(g, 5, 4), c1 = random_image(g, 5, 4);
  const CentroidModel m({rgb_to_lab(c0), rgb_to_lab(c1)}, 1.0);
  const auto d = m.distances(img);
  for (int k = 0; k < 2; ++k) {
    const RgbImage& c = k ? c1 : c0;
    double acc = 0;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) {
        const auto p = reference_lab(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
        const auto q = reference_lab(c.at(x, y, 0), c.at(x, y, 1), c.at(x, y, 2));
        for (int ch = 0; ch < 3; ++ch) acc += (p[ch] - q[ch]) * (p[ch] - q[ch]);
      }
    CHECK(d[k] == doctest::Approx(std::sqrt(acc / 20)).epsilon(1e-9));
  }
}

TEST_CASE("self-match and symmetry") {
  Gen g(4);
  std::vector<RgbImage> imgs;
  std::vector<LabImage> cents;
  for (int i = 0; i < 5; ++i) {
    imgs.push_back(random_image(g, 6, 6));
    cents.push_back(rgb_to_lab(imgs.back()));
  }
  const CentroidModel m(cents, 5.0);
  for (int i = 0; i < 5; ++i) CHECK(m.classify(imgs[i]).argmax() == i);

  const RgbImage img(1, 1, 100.0);
  const LabImage base = rgb_to_lab(img);
  const double l = base.at(0, 0, 0);
  const CentroidModel sym({lab_pixel(l + 5, 0, 0), lab_pixel(l - 5, 0, 0), lab_pixel(l, 90, 90)}, 2.0);
  const ProbSimplex p = sym.classify(img);
  CHECK(p[0] == doctest::Approx(p[1]).epsilon(1e-9));
  CHECK(p[2] < p[0]);
}

TEST_CASE("training computes per-class means") {
  Gen g(5);
  const RgbImage a = random_image(g, 4, 4), b = random_image(g, 4, 4), c = random_image(g, 4, 4);
  SUBCASE("one sample per class reproduces it") {
    const CentroidModel m = train_centroids({{&a, 0}, {&b, 1}}, 2);
    CHECK(m.centroids()[0] == rgb_to_lab(a));
    CHECK(m.centroids()[1] == rgb_to_lab(b));
  }
  SUBCASE("duplicates change nothing") {
    const CentroidModel m1 = train_centroids({{&a, 0}, {&c, 0}, {&b, 1}}, 2);
    const CentroidModel m2 = train_centroids({{&a, 0}, {&a, 0}, {&c, 0}, {&c, 0}, {&b, 1}}, 2);
    for (std::size_t i = 0; i < m1.centroids()[0].raw().size(); ++i)
      CHECK(m1.centroids()[0].raw()[i] == doctest::Approx(m2.centroids()[0].raw()[i]).epsilon(1e-12));
  }
  SUBCASE("two samples give the element-wise midpoint") {
    const CentroidModel m = train_centroids({{&a, 0}, {&c, 0}, {&b, 1}}, 2);
    const LabImage la = rgb_to_lab(a), lc = rgb_to_lab(c);
    for (std::size_t i = 0; i < la.raw().size(); ++i)
      CHECK(m.centroids()[0].raw()[i] == doctest::Approx((la.raw()[i] + lc.raw()[i]) / 2).epsilon(1e-12));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(train_centroids({{&a, 0}}, 2), DataError);  // class 1 empty
    CHECK_THROWS_AS(train_centroids({{&a, 0}, {&b, 2}}, 2), DataError);
    const RgbImage small(2, 2);
    CHECK_THROWS_AS(train_centroids({{&a, 0}, {&small, 1}}, 2), DataError);
    CHECK_THROWS_AS(CentroidModel({rgb_to_lab(a)}, 1.0), DataError);
    CHECK_THROWS_AS(CentroidModel({rgb_to_lab(a), rgb_to_lab(b)}, 0.0), DataError);
  }
}

TEST_CASE("centroid model json roundtrip") {
  Gen g(6);
  const RgbImage a = random_image(g, 3, 5), b = random_image(g, 3, 5);
  const CentroidModel m = train_centroids({{&a, 0}, {&b, 1}}, 2, 0.7, {"x", "y"});
  const CentroidModel back = CentroidModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(back.class_names() == m.class_names());
  CHECK(back.temperature() == m.temperature());
  CHECK(back.classify(a).probs() == m.classify(a).probs());
  CHECK(back.resolution() == std::pair{3, 5});
  CHECK_THROWS_AS(CentroidModel::from_json({{"kind", "cnn"}}), DataError);
  CHECK_THROWS_AS(m.classify(RgbImage(4, 4)), DataError);
}

TEST_CASE("built-in detector on synthetic signs") {
  RunConfig cfg;
  cfg.train_data.synthetic.samples_per_class = 40;
  const Dataset train = load_data(cfg.train_data);
  const double mean_l = dataset_mean_lightness(train);
  const BuiltinDetector det = train_builtin_detector(train, mean_l, kDefaultTemperature);
  CHECK(det.supports(Capability::detect));
  CHECK_FALSE(det.supports(Capability::classify));

  SUBCASE("blank background yields nothing") {
    CHECK(det.detect(RgbImage(32, 32, 128.0), 0.5).detections.empty());
  }
  SUBCASE("tau = 1 is unattainable") {
    CHECK(det.detect(render_reference_sign(0, 32), 1.0).detections.empty());
  }
  SUBCASE("a clean sign gives one detection with its class") {
    int correct = 0;
    for (int c = 0; c < 8; ++c) {
      const RgbImage img = normalize_lightness(render_reference_sign(c, 32), mean_l).image;
      const DetectorOutput out = det.detect(img, 0.5);
      if (out.detections.size() == 1 && out.detections[0].probs.argmax() == c) ++correct;
    }
    CHECK(correct == 8);
  }
  SUBCASE("invalid tau") { CHECK_THROWS_AS(det.detect(RgbImage(8, 8), 0.0), DataError); }
}

TEST_CASE("locate_sign ignores specks") {
  RgbImage img(32, 32, 128.0);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) img.at(x, y, 0) = 255;
  CHECK_FALSE(locate_sign(img, 20.0).has_value());
  for (int y = 10; y < 20; ++y)
    for (int x = 12; x < 18; ++x) img.at(x, y, 0) = 255;
  const auto box = locate_sign(img, 20.0);
  REQUIRE(box);
  CHECK(*box == BBox{12, 10, 6, 10});
}

TEST_CASE("composite oracle routes by capability") {
  auto cls = std::make_shared<ConstantOracle>(std::vector<double>{0.3, 0.7});
  const CompositeOracle c(cls, nullptr, nullptr);
  CHECK(c.supports(Capability::classify));
  CHECK_FALSE(c.supports(Capability::detect));
  CHECK(c.classify(RgbImage(2, 2)).argmax() == 1);
  CHECK_THROWS_AS(c.detect(RgbImage(2, 2), 0.5), CapabilityError);
  CHECK_THROWS_AS(c.segment(RgbImage(2, 2)), CapabilityError);
  CHECK(capability_name(Capability::segment) == "segment");
}
