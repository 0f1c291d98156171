// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and
// runtime limits are fixed below; the exit status is nonzero if any line
// fails.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "irpert/colorspace.hpp"
#include "irpert/defense.hpp"
#include "irpert/eot.hpp"
#include "irpert/harness/cli.hpp"
#include "irpert/harness/harness.hpp"
#include "irpert/loss.hpp"
#include "irpert/optimize.hpp"
#include "irpert/perturbation.hpp"
#include "support.hpp"

using namespace irpert;
using namespace irpert::testing;
namespace fs = std::filesystem;

namespace {

constexpr double kLabRoundtripTol = 1.0 / 255.0;
constexpr double kNormalizeTol = 1e-3;
constexpr double kUntargetedAsr = 0.90;
constexpr double kUntargetedQueries = 300;
constexpr double kHideAsr = 0.95;
constexpr double kHideQueries = 100;
constexpr double kHideTau = 0.5;
constexpr double kDefenseF1 = 0.90;
constexpr double kDefenseEer = 0.10;
constexpr double kDefenseStrictFrac = 0.90;
constexpr double kLuxRhoRatio = 5.0;
constexpr double kEotIdentityTol = 1e-6;
constexpr int kEotDraws = 10000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = s < limit_s;
  const bool pass = o.pass && in_time;
  failures += !pass;
  std::ostringstream line;
  line << (pass ? "PASS " : "FAIL ") << name << " (" << o.detail << "; " << std::fixed;
  line.precision(1);
  line << s << " s of " << limit_s << " s" << (in_time ? "" : ", too slow") << ")";
  std::cout << line.str() << std::endl;
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << v;
  return s.str();
}

// Every other sample: 100 of the 200, balanced over the classes.
Workspace every_other(const Workspace& ws) {
  Workspace w = ws;
  w.attack_set.samples.clear();
  for (std::size_t i = 0; i < ws.attack_set.samples.size(); i += 2) w.attack_set.samples.push_back(ws.attack_set.samples[i]);
  return w;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = s.str();
  }
  return files;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "irpert");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace

int main() {
  RunConfig base;
  base.threads = 0;
  const Workspace ws = prepare_workspace(base);

  criterion("schedule", 1, [] {
    int bad = 0;
    for (int k : {16, 32, 64, 96, 128, 192})
      for (int q : {100, 1000}) {
        bad += schedule(0, k, q) != (k + 1) / 2;
        bad += schedule(q, k, q) != 1;
      }
    const int mid = schedule(500, 192, 1000);
    bad += mid != 10;
    return Outcome{bad == 0, std::to_string(bad) + " mismatches, schedule(500; 192, 1000) = " + std::to_string(mid)};
  });

  criterion("loss/criterion equivalence", 10, [] {
    Gen g(101);
    std::uniform_int_distribution<int> nd(3, 43);
    std::uniform_real_distribution<double> u(0, 40), tau_d(0.05, 0.95);
    long violations = 0, checked = 0;
    while (checked < 10000) {
      const int n = nd(g);
      auto p = random_simplex(g, static_cast<std::size_t>(n));
      if (!unique_argmax(p)) continue;
      std::uniform_int_distribution<int> cd(0, n - 1);
      const int s = cd(g);
      int t = cd(g);
      if (t == s) t = (t + 1) % n;
      const ProbSimplex ps(p);
      for (const AttackGoal goal : {AttackGoal(Untargeted{s}), AttackGoal(Targeted{s, t})})
        violations += (margin_loss(ps, goal) < 0) != criterion(ps, goal);

      // Hide: the same simplex as a detection on or off the source box.
      const BBox src{u(g), u(g), 5 + u(g), 5 + u(g)};
      const AttackGoal hide(Hide{s, src, tau_d(g)});
      DetectorOutput out;
      const BBox near{src.x + u(g) / 20, src.y + u(g) / 20, src.w, src.h};
      out.detections.push_back({checked % 2 ? near : BBox{u(g), u(g), u(g), u(g)}, ps});
      violations += (hide_loss(out, hide) < 0) != criterion(out, hide);
      ++checked;
    }
    return Outcome{violations == 0, std::to_string(violations) + " violations over " + std::to_string(checked) +
                                        " simplexes x 3 goal kinds"};
  });

  criterion("color model", 30, [] {
    Gen g(102);
    double lab_err = 0;
    for (int i = 0; i < 1000; ++i) {
      const RgbImage img = random_image(g, 16, 16);
      lab_err = std::max(lab_err, max_abs_diff(lab_to_rgb(rgb_to_lab(img)), img));
    }
    std::uniform_real_distribution<double> td(20, 80);
    double norm_err = 0;
    for (int i = 0; i < 1000; ++i) {
      const RgbImage img = random_image(g, 16, 16, 20, 235);
      const double target = td(g);
      const NormalizeResult r = normalize_lightness(img, target);
      double sum = 0;
      for (double v : r.lab.plane(0)) sum += v;
      norm_err = std::max(norm_err, std::abs(sum / static_cast<double>(r.lab.pixel_count()) - target));
    }
    std::uniform_real_distribution<double> rd(0, 2);
    const RgbImage px = random_image(g, 1000, 1);
    const RhoTriple rho{rd(g), rd(g), rd(g)};
    const RgbImage lit = apply_ir_transform(px, rho);
    int ir_bad = 0;
    for (int x = 0; x < 1000; ++x)
      for (int c = 0; c < 3; ++c)
        ir_bad += lit.at(x, 0, c) != std::clamp(px.at(x, 0, c) + px.at(x, 0, 0) * rho[c], 0.0, 255.0);
    return Outcome{lab_err <= kLabRoundtripTol && norm_err <= kNormalizeTol && ir_bad == 0,
                   "LAB roundtrip max " + fmt(lab_err * 255, 4) + "/255, normalize max err " + fmt(norm_err, 6) +
                       ", IR mismatches " + std::to_string(ir_bad)};
  });

  criterion("apply_ir gating", 10, [] {
    Gen g(103);
    std::uniform_int_distribution<int> sd(1, 37);
    std::uniform_real_distribution<double> rd(0, 2);
    int bad = 0;
    for (int trial = 0; trial < 300; ++trial) {
      const int w = sd(g), h = sd(g);
      const RgbImage x = random_image(g, w, h);
      const RhoTriple rho{rd(g), rd(g), rd(g)};
      ProjectionMask ones(w, h), zeros(w, h);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) ones.set(xx, y, true);
      bad += !(apply_ir(x, ones, rho) == x);
      bad += !(apply_ir(x, zeros, rho) == apply_ir_transform(x, rho));
      const auto mixed = random_mask<ProjectionMask>(g, w, h);
      bad += !(apply_ir(x, mixed, rho) == reference_apply_ir(x, mixed, rho));
    }
    return Outcome{bad == 0, std::to_string(bad) + " of 900 images differ"};
  });

  // Untargeted runs feed the defense criterion too.
  RunConfig untargeted = base;
  untargeted.scenario = 4;
  untargeted.attack.k = 192;
  untargeted.attack.l = 2;
  untargeted.attack.max_queries = 1000;
  untargeted.lux = 10;
  RunReport lrs;
  criterion("desk-scale untargeted attack", 300, [&] {
    lrs = run_scenario(ws, untargeted);
    RunConfig rnd_cfg = untargeted;
    rnd_cfg.attack.strategy = Strategy::rnd;
    const RunReport rnd = run_scenario(ws, rnd_cfg);
    const bool pass = lrs.images.size() == 200 && lrs.asr >= kUntargetedAsr &&
                      lrs.mean_queries <= kUntargetedQueries && lrs.asr >= rnd.asr &&
                      lrs.mean_queries < rnd.mean_queries;
    return Outcome{pass, "LRS ASR " + fmt(lrs.asr) + " queries " + fmt(lrs.mean_queries, 1) + " on " +
                             std::to_string(lrs.images.size()) + " images; RND ASR " + fmt(rnd.asr) + " queries " +
                             fmt(rnd.mean_queries, 1)};
  });

  criterion("desk-scale hide attack", 120, [&] {
    RunConfig hide = base;
    hide.scenario = 5;
    hide.tau = kHideTau;
    hide.attack.k = 192;
    hide.attack.l = 2;
    const RunReport r = run_scenario(every_other(ws), hide);
    const bool pass = r.images.size() == 100 && r.asr >= kHideAsr && r.mean_queries <= kHideQueries;
    return Outcome{pass, "ASR " + fmt(r.asr) + " queries " + fmt(r.mean_queries, 1) + " on " +
                             std::to_string(r.images.size()) + " images"};
  });

  criterion("lux monotonicity", 900, [&] {
    const ScalingCurve curve = untargeted.scaling_curve();
    const RhoTriple lo = curve.eval(10), hi = curve.eval(5000);
    bool ratio = true;
    for (int c = 0; c < 3; ++c) ratio = ratio && lo[c] >= kLuxRhoRatio * hi[c];
    RunConfig cfg = untargeted;
    cfg.sweep.lux = {10, 1000, 2000, 3000, 4000, 5000};
    cfg.sweep.k = {192};
    cfg.sweep.l = {2};
    const auto cells = run_sweep(ws, cfg);
    std::vector<double> lux, asr;
    std::string detail = "ASR by lux:";
    for (const auto& c : cells) {
      lux.push_back(c.lux);
      asr.push_back(c.asr);
      detail += " " + fmt(c.asr);
    }
    const double rs = spearman(lux, asr);
    return Outcome{ratio && rs <= 0,
                   detail + ", Spearman " + fmt(rs) + (ratio ? "" : ", curve ratio below 5")};
  });

  criterion("defense", 120, [&] {
    if (lrs.images.size() != 200) return Outcome{false, "no untargeted report"};
    std::vector<std::size_t> clean, attacked;
    std::size_t strictly = 0;
    for (std::size_t i = 0; i < lrs.images.size(); i += 2) {
      const Replayed rp = replay_image(lrs.images[i], ws, untargeted, lrs.rho);
      clean.push_back(shape_count(rp.clean, base.defense));
      attacked.push_back(shape_count(rp.adversarial, base.defense));
      strictly += attacked.back() > clean.back();
    }
    const CalibrationReport cal = calibrate_nu(clean, attacked);
    const double frac = static_cast<double>(strictly) / static_cast<double>(clean.size());
    const bool pass = cal.f1 >= kDefenseF1 && cal.eer <= kDefenseEer && frac >= kDefenseStrictFrac;
    return Outcome{pass, "nu " + fmt(cal.nu, 0) + " F1 " + fmt(cal.f1) + " EER " + fmt(cal.eer) +
                             ", attacked > clean in " + fmt(frac) + " of " + std::to_string(clean.size()) + " pairs"};
  });

  criterion("determinism", 60, [] {
    std::string tmpl = (fs::temp_directory_path() / "irpert-accept-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) return Outcome{false, "mkdtemp failed"};
    const fs::path dir = tmpl;
    const std::string rep = (dir / "seed" / "report.json").string();
    if (cli({"--seed", "3", "attack", "--max-images", "16", "--queries", "60", "--out", (dir / "seed").string()}) != 0)
      return Outcome{false, "seed attack failed"};
    const std::vector<std::vector<std::string>> commands{
        {"--seed", "3", "attack", "--max-images", "16", "--queries", "60", "--trace"},
        {"--seed", "3", "sweep", "--max-images", "6", "--queries", "20", "--lux-axis", "10", "5000"},
        {"--seed", "3", "transfer", "--report", rep},
        {"--seed", "3", "defend", "--report", rep},
        {"--seed", "3", "calibrate-nu", "--report", rep},
        {"--seed", "3", "export-film", "--report", rep, "--dpi", "100", "--size-mm", "20", "--key", "0/0000"},
        {"--seed", "3", "synth-data", "--classes", "3", "--per-class", "4"},
    };
    int differing = 0, failed = 0;
    std::string which;
    for (std::size_t i = 0; i < commands.size(); ++i) {
      std::map<std::string, std::string> runs[2];
      for (int r = 0; r < 2; ++r) {
        auto args = commands[i];
        const fs::path out = dir / ("c" + std::to_string(i) + "_" + std::to_string(r));
        args.push_back("--out");
        args.push_back(out.string());
        failed += cli(args) != 0;
        runs[r] = tree(out);
      }
      if (runs[0] != runs[1] || runs[0].empty()) {
        ++differing;
        which += " " + commands[i][2];
      }
    }
    std::error_code ec;
    fs::remove_all(dir, ec);
    return Outcome{differing == 0 && failed == 0, std::to_string(commands.size()) + " subcommands, " +
                                                      std::to_string(differing) + " differ" + which + ", " +
                                                      std::to_string(failed) + " failed"};
  });

  criterion("EOT sanity", 120, [&] {
    Rng rng(104);
    double worst = 0;
    for (std::size_t i = 0; i < ws.attack_set.samples.size(); ++i) {
      const auto& smp = ws.attack_set.samples[i];
      const RgbImage x = normalize_lightness(smp.image, ws.mean_l).image;
      const ObjectMask mask = ws.attack_set.mask_for(smp.label);
      const MpGrid grid(2, x.width(), x.height());
      const MpSet set = sample_mp_set(rng, 192, grid);
      Objective plain(*ws.classifier, x, mask, grid, base.rho(), Untargeted{smp.label});
      Objective eot(*ws.classifier, x, mask, grid, base.rho(), Untargeted{smp.label}, EotConfig::identity(), i);
      worst = std::max(worst, std::abs(plain.loss(set) - eot.loss(set)));
    }

    const EotConfig cfg;
    std::vector<ObjectMask> masks;
    std::vector<SignGeometry> geoms;
    for (int c = 0; c < static_cast<int>(ws.attack_set.class_names.size()); ++c) {
      masks.push_back(ws.attack_set.mask_for(c));
      geoms.push_back(sign_geometry(masks.back()));
    }
    int violations = 0;
    for (int i = 0; i < kEotDraws; ++i) {
      const auto s = sample_transform(rng, cfg);
      const std::size_t m = static_cast<std::size_t>(i) % masks.size();
      const auto& smp = ws.attack_set.samples[static_cast<std::size_t>(i) % ws.attack_set.samples.size()];
      const auto t = apply_transform(smp.image, masks[m], geoms[m], s, nullptr, cfg.min_size_px);
      violations += std::min(t.sign_bbox.w, t.sign_bbox.h) < cfg.min_size_px;
    }
    return Outcome{worst <= kEotIdentityTol && violations == 0,
                   "identity max loss diff " + fmt(worst, 12) + " over " +
                       std::to_string(ws.attack_set.samples.size()) + " images, " + std::to_string(violations) +
                       " min-size violations in " + std::to_string(kEotDraws) + " draws"};
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
