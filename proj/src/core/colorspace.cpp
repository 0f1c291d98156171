#include "irpert/colorspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include "json.hpp"

#include "../simd/kernels_common.hpp"
#include "irpert/simd/kernels.hpp"

namespace irpert {
namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 inverse_primaries() {
  const auto& m = simd::detail::kM;
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 inv{};
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

double lab_finv(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta ? t * t * t : 3.0 * delta * delta * (t - 4.0 / 29.0);
}

double delinearize(double v) {
  const double c = v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(std::max(v, 0.0), 1.0 / 2.4) - 0.055;
  return std::clamp(c * 255.0, 0.0, 255.0);
}

double median_of(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// Pool-adjacent-violators for a non-increasing fit, equal weights.
std::vector<double> antitonic(const std::vector<double>& y) {
  struct Block {
    double sum;
    int n;
  };
  std::vector<Block> blocks;
  for (double v : y) {
    blocks.push_back({v, 1});
    while (blocks.size() > 1) {
      const Block& b = blocks.back();
      const Block& a = blocks[blocks.size() - 2];
      if (a.sum / a.n >= b.sum / b.n) break;
      Block merged{a.sum + b.sum, a.n + b.n};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  std::vector<double> out;
  for (const Block& b : blocks) out.insert(out.end(), static_cast<std::size_t>(b.n), b.sum / b.n);
  return out;
}

ScalingCurve::ExpFit fit_exp(const std::vector<ScalingCurve::Knot>& knots) {
  // For fixed b the model is linear in (a, c): solve it, keep the best b.
  auto solve = [&](double b, ScalingCurve::ExpFit& fit) {
    double s_ee = 0, s_e = 0, s_ey = 0, s_y = 0;
    const double n = double(knots.size());
    for (const auto& k : knots) {
      const double e = std::exp(-b * k.lux);
      s_ee += e * e;
      s_e += e;
      s_ey += e * k.rho;
      s_y += k.rho;
    }
    const double det = n * s_ee - s_e * s_e;
    double a = det > 1e-15 ? (n * s_ey - s_e * s_y) / det : 0.0;
    a = std::max(a, 0.0);
    const double c = (s_y - a * s_e) / n;
    fit = {a, b, c};
    double sse = 0;
    for (const auto& k : knots) {
      const double r = a * std::exp(-b * k.lux) + c - k.rho;
      sse += r * r;
    }
    return sse;
  };
  ScalingCurve::ExpFit best{};
  double best_sse = std::numeric_limits<double>::infinity();
  double best_log_b = 0;
  for (int i = 0; i <= 120; ++i) {
    const double log_b = std::log(1e-6) + (std::log(1e-1) - std::log(1e-6)) * i / 120.0;
    ScalingCurve::ExpFit fit;
    const double sse = solve(std::exp(log_b), fit);
    if (sse < best_sse) {
      best_sse = sse;
      best = fit;
      best_log_b = log_b;
    }
  }
  // Golden-section refinement within one grid step.
  const double step = (std::log(1e-1) - std::log(1e-6)) / 120.0;
  double lo = best_log_b - step, hi = best_log_b + step;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 60; ++it) {
    const double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
    ScalingCurve::ExpFit f1, f2;
    if (solve(std::exp(m1), f1) < solve(std::exp(m2), f2))
      hi = m2;
    else
      lo = m1;
  }
  ScalingCurve::ExpFit refined;
  if (solve(std::exp(0.5 * (lo + hi)), refined) < best_sse) best = refined;
  return best;
}

}  // namespace

LabImage rgb_to_lab(const RgbImage& img) {
  LabImage lab(img.width(), img.height());
  simd::active().rgb_to_lab(img.plane(0).data(), img.plane(1).data(), img.plane(2).data(), img.pixel_count(),
                            lab.plane(0).data(), lab.plane(1).data(), lab.plane(2).data());
  return lab;
}

RgbImage lab_to_rgb(const LabImage& lab) {
  static const Mat3 inv = inverse_primaries();
  using simd::detail::kWhiteX;
  using simd::detail::kWhiteY;
  using simd::detail::kWhiteZ;
  RgbImage out(lab.width(), lab.height());
  const auto l = lab.plane(0), a = lab.plane(1), b = lab.plane(2);
  auto r = out.plane(0), g = out.plane(1), bl = out.plane(2);
  for (std::size_t i = 0; i < lab.pixel_count(); ++i) {
    const double fy = (l[i] + 16.0) / 116.0;
    const double fx = fy + a[i] / 500.0;
    const double fz = fy - b[i] / 200.0;
    const double x = kWhiteX * lab_finv(fx), y = kWhiteY * lab_finv(fy), z = kWhiteZ * lab_finv(fz);
    r[i] = delinearize(inv[0][0] * x + inv[0][1] * y + inv[0][2] * z);
    g[i] = delinearize(inv[1][0] * x + inv[1][1] * y + inv[1][2] * z);
    bl[i] = delinearize(inv[2][0] * x + inv[2][1] * y + inv[2][2] * z);
  }
  return out;
}

double mean_lightness(const LabImage& lab) {
  double sum = 0;
  for (double v : lab.plane(0)) sum += v;
  return sum / double(lab.pixel_count());
}

double mean_lightness(const RgbImage& img) { return mean_lightness(rgb_to_lab(img)); }

NormalizeResult normalize_lightness(const RgbImage& img, double dataset_mean_l) {
  if (!(dataset_mean_l > 0.0 && dataset_mean_l <= 100.0))
    throw DataError("dataset mean lightness must lie in (0, 100]");
  LabImage lab = rgb_to_lab(img);
  const double mean = mean_lightness(lab);
  if (mean <= 0.0) return {img, std::move(lab), true};
  const double scale = dataset_mean_l / mean;
  for (double& v : lab.plane(0)) v *= scale;
  RgbImage rgb = lab_to_rgb(lab);
  return {std::move(rgb), std::move(lab), false};
}

LuxLevel::LuxLevel(double lux) : value(lux) {
  if (!(lux > 0.0)) throw DataError("lux must be positive");
}

ScalingCurve::ScalingCurve(std::array<std::vector<Knot>, 3> knots, CurveInterp interp)
    : knots_(std::move(knots)), interp_(interp) {
  for (int c = 0; c < 3; ++c) {
    auto& ks = knots_[c];
    if (ks.empty()) throw DataError("scaling curve channel without knots");
    std::sort(ks.begin(), ks.end(), [](const Knot& a, const Knot& b) { return a.lux < b.lux; });
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (!(ks[i].lux > 0.0) || !std::isfinite(ks[i].rho))
        throw DataError("scaling curve knots need positive lux and finite rho");
      if (i > 0 && ks[i].lux == ks[i - 1].lux) throw DataError("duplicate lux knot in scaling curve");
      if (i > 0 && ks[i].rho > ks[i - 1].rho) throw DataError("scaling curve must be non-increasing in lux");
    }
    if (interp_ == CurveInterp::expdecay) fits_[c] = fit_exp(ks);
  }
}

RhoTriple ScalingCurve::eval(double lux) const {
  RhoTriple out{};
  for (int c = 0; c < 3; ++c) {
    const auto& ks = knots_[c];
    const double clamped = std::clamp(lux, ks.front().lux, ks.back().lux);
    if (interp_ == CurveInterp::expdecay) {
      const auto& f = fits_[c];
      out[c] = f.a * std::exp(-f.b * clamped) + f.c;
      continue;
    }
    auto it = std::lower_bound(ks.begin(), ks.end(), clamped, [](const Knot& k, double v) { return k.lux < v; });
    if (it->lux == clamped) {
      out[c] = it->rho;
      continue;
    }
    const Knot& hi = *it;
    const Knot& lo = *(it - 1);
    const double t = (clamped - lo.lux) / (hi.lux - lo.lux);
    out[c] = lo.rho + t * (hi.rho - lo.rho);
  }
  return out;
}

ScalingCurve ScalingCurve::builtin() {
  const std::array<double, 7> lux{100, 1000, 2000, 3000, 4000, 5000, 6000};
  const std::array<std::array<double, 7>, 3> rho{{
      {1.00, 0.92, 0.78, 0.58, 0.36, 0.18, 0.10},
      {0.32, 0.29, 0.24, 0.18, 0.11, 0.055, 0.03},
      {0.20, 0.18, 0.15, 0.11, 0.07, 0.035, 0.02},
  }};
  std::array<std::vector<Knot>, 3> knots;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < lux.size(); ++i) knots[c].push_back({lux[i], rho[c][i]});
  return ScalingCurve(std::move(knots));
}

nlohmann::json ScalingCurve::to_json() const {
  nlohmann::json doc;
  const char* names[3] = {"r", "g", "b"};
  for (int c = 0; c < 3; ++c) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& k : knots_[c]) arr.push_back({k.lux, k.rho});
    doc["channels"][names[c]] = arr;
  }
  doc["interp"] = interp_ == CurveInterp::linear ? "linear" : "expdecay";
  return doc;
}

ScalingCurve ScalingCurve::from_json(const nlohmann::json& doc) {
  try {
    std::array<std::vector<Knot>, 3> knots;
    const char* names[3] = {"r", "g", "b"};
    for (int c = 0; c < 3; ++c)
      for (const auto& pair : doc.at("channels").at(names[c]))
        knots[c].push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
    const std::string interp = doc.value("interp", "linear");
    if (interp != "linear" && interp != "expdecay") throw DataError("unknown curve interp '" + interp + "'");
    return ScalingCurve(std::move(knots), interp == "linear" ? CurveInterp::linear : CurveInterp::expdecay);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed scaling curve: ") + e.what());
  }
}

bool pair_median_rho(const MeasurementPair& pair, RhoTriple& out) {
  if (!pair.vis.same_shape(pair.ir)) throw DataError("measurement pair images differ in size");
  std::array<std::vector<double>, 3> samples;
  const auto vr = pair.vis.plane(0);
  for (std::size_t i = 0; i < pair.vis.pixel_count(); ++i) {
    if (vr[i] < kRedFloor) continue;
    for (int c = 0; c < 3; ++c) samples[c].push_back((pair.ir.plane(c)[i] - pair.vis.plane(c)[i]) / vr[i]);
  }
  if (samples[0].empty()) return false;
  for (int c = 0; c < 3; ++c) out[c] = median_of(samples[c]);
  return true;
}

ScalingCurve estimate_rho(const std::vector<MeasurementPair>& pairs, CurveInterp interp,
                          std::vector<std::string>* warnings) {
  // Pairs that share a lux level are averaged into a single knot.
  std::map<double, std::pair<RhoTriple, int>> by_lux;
  for (const auto& pair : pairs) {
    LuxLevel lux(pair.lux);
    RhoTriple med{};
    if (!pair_median_rho(pair, med)) {
      if (warnings)
        warnings->push_back("skipping pair at " + std::to_string(lux.value) + " lux: no pixel above the red floor");
      continue;
    }
    auto& slot = by_lux[lux.value];
    for (int c = 0; c < 3; ++c) slot.first[c] += med[c];
    slot.second += 1;
  }
  if (by_lux.empty()) throw DataError("no usable measurement pair for rho estimation");
  if (by_lux.size() < 2) throw DataError("rho estimation needs pairs at two or more distinct lux levels");
  std::array<std::vector<ScalingCurve::Knot>, 3> knots;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> values;
    for (const auto& [lux, slot] : by_lux) values.push_back(slot.first[c] / slot.second);
    const auto fitted = antitonic(values);
    std::size_t i = 0;
    for (const auto& [lux, slot] : by_lux) knots[c].push_back({lux, fitted[i++]});
  }
  return ScalingCurve(std::move(knots), interp);
}

RgbImage apply_ir_transform(const RgbImage& img, const RhoTriple& rho) {
  for (double r : rho)
    if (r < 0.0) throw DataError("rho must be non-negative");
  RgbImage out(img.width(), img.height());
  simd::active().ir_blend(img.plane(0).data(), img.plane(1).data(), img.plane(2).data(), nullptr,
                          img.pixel_count(), rho.data(), out.plane(0).data(), out.plane(1).data(),
                          out.plane(2).data());
  return out;
}

}  // namespace irpert
