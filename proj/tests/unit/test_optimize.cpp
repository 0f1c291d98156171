#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "irpert/harness/harness.hpp"
#include "irpert/optimize.hpp"
#include "support.hpp"

using namespace irpert;
using namespace irpert::testing;

namespace {

constexpr Strategy kAll[] = {Strategy::lrs, Strategy::rnd, Strategy::pso, Strategy::ga, Strategy::es};

// Two classes; the more red the image, the more class 1 wins. Perturbed
// cells raise red, so the loss depends on which cells the set touches.
class RedOracle final : public Oracle {
 public:
  bool supports(Capability cap) const override { return cap == Capability::classify; }
  ProbSimplex classify(const RgbImage& img) const override {
    double s = 0, wsum = 0;
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        // Weight the left half more so cell choice matters.
        const double w = x < img.width() / 2 ? 3.0 : 1.0;
        s += w * img.at(x, y, 0);
        wsum += w;
      }
    const double a = std::clamp(0.35 + (s / wsum - 100.0) / 200.0, 0.0, 1.0);
    return ProbSimplex({1.0 - a, a});
  }
};

// Fails every call after the first `ok` ones.
class FlakyOracle final : public Oracle {
 public:
  explicit FlakyOracle(int ok) : ok_(ok) {}
  bool supports(Capability cap) const override { return cap == Capability::classify; }
  ProbSimplex classify(const RgbImage&) const override {
    if (calls_++ >= ok_) throw TransportError("endpoint went away");
    return ProbSimplex({0.9, 0.1});
  }

 private:
  int ok_;
  mutable int calls_ = 0;
};

struct Setup {
  RgbImage image;
  ObjectMask mask;
  MpGrid grid;
};

Setup make_setup(int side = 16, int l = 2) {
  RgbImage img(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      img.at(x, y, 0) = 100;
      img.at(x, y, 1) = 120;
      img.at(x, y, 2) = 140;
    }
  ObjectMask mask(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) mask.set(x, y, true);
  return {img, mask, MpGrid(l, side, side)};
}

const RhoTriple kRho{1.0, 0.3, 0.2};

OptimConfig config(Strategy s, int k, int q, std::uint64_t seed = 1) {
  OptimConfig c;
  c.k = k;
  c.l = 2;
  c.max_queries = q;
  c.seed = seed;
  c.strategy = s;
  return c;
}

}  // namespace

TEST_CASE("schedule examples") {
  for (int k : {2, 3, 7, 40, 64, 192, 511, 1000}) {
    CHECK(schedule(0, k, 1000) == (k + 1) / 2);
    CHECK(schedule(1000, k, 1000) == 1);
  }
  CHECK(schedule(500, 192, 1000) == 10);
  CHECK(schedule(10, 1, 100) == 1);
  CHECK(schedule(0, 0, 100) == 1);
}

TEST_CASE("schedule matches its closed form and is non-increasing") {
  for (int k : {2, 5, 40, 192, 511})
    for (int q : {1, 10, 333, 1000}) {
      int prev = schedule(0, k, q);
      for (int i = 0; i <= q; ++i) {
        const int v = schedule(i, k, q);
        // pow and exp(log) differ in the last bits; i = q lands on 1 exactly.
        const long double raw = k / 2.0L * std::pow(2.0L / k, static_cast<long double>(i) / q);
        const double closed = std::ceil(static_cast<double>(raw) - 1e-9);
        CHECK(v == std::clamp(static_cast<int>(closed), 1, k));
        CHECK(v <= prev);
        CHECK(v >= 1);
        CHECK(v <= (k + 1) / 2);
        prev = v;
      }
    }
}

TEST_CASE("config validation and grid checks") {
  auto s = make_setup();
  ConstantOracle oracle({0.9, 0.1});
  Objective obj(oracle, s.image, s.mask, s.grid, kRho, Untargeted{0});
  OptimConfig c = config(Strategy::lrs, 4, 10);
  c.k = 0;
  CHECK_THROWS_AS(optimize(obj, c), DataError);
  c = config(Strategy::lrs, 4, 0);
  CHECK_THROWS_AS(optimize(obj, c), DataError);
  c = config(Strategy::lrs, 4, 10);
  c.l = 4;
  CHECK_THROWS_AS(optimize(obj, c), DataError);
  c = config(Strategy::lrs, 65, 10);
  CHECK_THROWS_AS(optimize(obj, c), DataError);
  CHECK(parse_strategy("PSO") == Strategy::pso);
  CHECK_THROWS_AS(parse_strategy("sgd"), UsageError);
}

TEST_CASE("a budget of one evaluates exactly one candidate") {
  auto s = make_setup();
  for (Strategy st : kAll) {
    RedOracle oracle;
    Objective obj(oracle, s.image, s.mask, s.grid, kRho, Untargeted{1});
    const auto r = optimize(obj, config(st, 8, 1));
    CHECK(r.queries_used == 1);
    CHECK(r.trace.size() == 1);
    CHECK(r.evaluations == 1);
    CHECK(r.mp_set.size() == 8);
  }
}

TEST_CASE("RND and LRS with one query draw the same set") {
  auto s = make_setup();
  RedOracle oracle;
  Objective a(oracle, s.image, s.mask, s.grid, kRho, Untargeted{1});
  Objective b(oracle, s.image, s.mask, s.grid, kRho, Untargeted{1});
  const auto ra = optimize(a, config(Strategy::lrs, 8, 1, 77));
  const auto rb = optimize(b, config(Strategy::rnd, 8, 1, 77));
  CHECK(ra.mp_set == rb.mp_set);
  CHECK(ra.final_loss == rb.final_loss);
}

TEST_CASE("an already satisfied goal stops after one query") {
  auto s = make_setup();
  ConstantOracle oracle({0.1, 0.9});
  for (Strategy st : kAll) {
    Objective obj(oracle, s.image, s.mask, s.grid, kRho, Targeted{0, 1});
    const auto r = optimize(obj, config(st, 8, 500));
    CHECK(r.success);
    CHECK(r.queries_used == 1);
    CHECK(r.final_loss == doctest::Approx(-0.8));
  }
}

TEST_CASE("without success the whole budget is used") {
  auto s = make_setup();
  ConstantOracle oracle({0.9, 0.1});
  for (Strategy st : kAll) {
    Objective obj(oracle, s.image, s.mask, s.grid, kRho, Untargeted{0});
    const auto r = optimize(obj, config(st, 8, 57));
    CHECK_FALSE(r.success);
    CHECK(r.queries_used == 57);
    CHECK(r.trace.size() == 57);
    // Equal losses are never accepted after the first.
    CHECK(r.improvements().size() == 1);
  }
}

TEST_CASE("stop_on_success false runs the full budget") {
  auto s = make_setup();
  ConstantOracle oracle({0.1, 0.9});
  Objective obj(oracle, s.image, s.mask, s.grid, kRho, Targeted{0, 1});
  auto c = config(Strategy::lrs, 8, 40);
  c.stop_on_success = false;
  const auto r = optimize(obj, c);
  CHECK(r.success);
  CHECK(r.queries_used == 40);
}

TEST_CASE("result invariants hold for every strategy") {
  auto s = make_setup();
  for (Strategy st : kAll)
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      CAPTURE(strategy_name(st));
      RedOracle oracle;
      Objective obj(oracle, s.image, s.mask, s.grid, kRho, Untargeted{1});
      auto c = config(st, 12, 150, seed);
      c.stop_on_success = false;
      const auto r = optimize(obj, c);
      CHECK(r.queries_used <= c.max_queries);
      CHECK(r.success == (r.final_loss < 0));
      CHECK(r.mp_set.size() == 12);
      REQUIRE_FALSE(r.trace.empty());
      CHECK(r.final_loss <= r.trace.front().loss);
      const auto imp = r.improvements();
      for (std::size_t i = 1; i < imp.size(); ++i) CHECK(imp[i].loss < imp[i - 1].loss);
      CHECK(imp.back().loss == r.final_loss);
      // The reported image and mask belong to the reported set.
      CHECK(r.projection == model_perturbation(r.mp_set, s.mask, s.grid));
      CHECK(r.adversarial_image == apply_ir(s.image, r.projection, kRho));
      CHECK(evaluate_candidate(s.image, r.mp_set, s.mask, s.grid, kRho, Untargeted{1}, oracle) == r.final_loss);
    }
}

TEST_CASE("search improves on a structured objective") {
  auto s = make_setup();
  RedOracle oracle;
  Objective obj(oracle, s.image, s.mask, s.grid, kRho, Untargeted{1});
  auto c = config(Strategy::lrs, 16, 300);
  c.stop_on_success = false;
  const auto r = optimize(obj, c);
  CHECK(r.improvements().size() > 1);
  CHECK(r.final_loss < r.trace.front().loss);
}

TEST_CASE("same seed reproduces the result") {
  auto s = make_setup();
  for (Strategy st : kAll) {
    RedOracle oracle;
    Objective a(oracle, s.image, s.mask, s.grid, kRho, Untargeted{1});
    Objective b(oracle, s.image, s.mask, s.grid, kRho, Untargeted{1});
    auto c = config(st, 10, 120, 9);
    c.stop_on_success = false;
    const auto ra = optimize(a, c);
    const auto rb = optimize(b, c);
    CHECK(ra.mp_set == rb.mp_set);
    CHECK(ra.final_loss == rb.final_loss);
    std::ostringstream ta, tb;
    write_trace_csv(ta, ra);
    write_trace_csv(tb, rb);
    CHECK(ta.str() == tb.str());
  }
}

TEST_CASE("oracle failure aborts with the partial result") {
  auto s = make_setup();
  FlakyOracle oracle(5);
  Objective obj(oracle, s.image, s.mask, s.grid, kRho, Untargeted{0});
  const auto r = optimize(obj, config(Strategy::lrs, 8, 100));
  CHECK(r.aborted);
  CHECK(r.error.find("went away") != std::string::npos);
  CHECK(r.queries_used == 5);
  CHECK(r.mp_set.size() == 8);
}

TEST_CASE("trace csv format") {
  OptimResult r;
  r.trace = {{1, 0.5, true}, {2, 0.75, false}};
  std::ostringstream out;
  write_trace_csv(out, r);
  CHECK(out.str() == "query,loss,accepted\n1,0.5,1\n2,0.75,0\n");
}

TEST_CASE("empty set on a clean sign keeps the built-in model correct") {
  RunConfig cfg;
  const Workspace ws = prepare_workspace(cfg);
  const MpGrid grid(2, ws.attack_set.width, ws.attack_set.height);
  int positive = 0;
  for (const auto& smp : ws.attack_set.samples) {
    const RgbImage x = normalize_lightness(smp.image, ws.mean_l).image;
    const ObjectMask mask = ws.attack_set.mask_for(smp.label);
    const double loss =
        evaluate_candidate(x, MpSet{}, mask, grid, cfg.rho(), Untargeted{smp.label}, *ws.classifier);
    // No cells: nothing is blocked, the whole image takes the IR shift.
    const RgbImage lit = reference_apply_ir(x, ProjectionMask(x.width(), x.height()), cfg.rho());
    const auto p = ws.classifier->classify(lit);
    double other = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (static_cast<int>(i) != smp.label) other = std::max(other, p[i]);
    CHECK(loss == doctest::Approx(p[smp.label] - other).epsilon(1e-9));
    positive += loss > 0;
  }
  // The clean model itself misses a few of the 200 samples.
  CHECK(positive >= 190);
}
