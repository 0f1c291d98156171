#include "irpert/eot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "irpert/colorspace.hpp"

namespace irpert {

void EotConfig::validate() const {
  if (samples_per_candidate < 1) throw DataError("eot samples_per_candidate must be >= 1");
  if (min_size_px < 1) throw DataError("eot min_size_px must be >= 1");
  if (perspective_deg < 0 || perspective_deg >= 80) throw DataError("eot perspective_deg must lie in [0, 80)");
  if (rotation_deg < 0) throw DataError("eot rotation_deg must be non-negative");
  if (!(scale_min > 0) || scale_max < scale_min) throw DataError("eot scale range must satisfy 0 < min <= max");
  if (brightness_pct < 0 || brightness_pct >= 100) throw DataError("eot brightness_pct must lie in [0, 100)");
  if (shift_px < 0) throw DataError("eot shift_px must be non-negative");
  if (blur_min_px < 1 || blur_max_px < blur_min_px) throw DataError("eot blur range must satisfy 1 <= min <= max");
  if (rho_jitter < 0 || rho_jitter >= 1) throw DataError("eot rho_jitter must lie in [0, 1)");
}

EotConfig EotConfig::identity() {
  EotConfig c;
  c.samples_per_candidate = 1;
  c.perspective_deg = 0;
  c.rotation_deg = 0;
  c.scale_min = c.scale_max = 1;
  c.min_size_px = 1;
  c.brightness_pct = 0;
  c.shift_px = 0;
  c.blur_min_px = c.blur_max_px = 1;
  c.rho_jitter = 0;
  return c;
}

nlohmann::json EotConfig::to_json() const {
  return {{"samples_per_candidate", samples_per_candidate},
          {"perspective_deg", perspective_deg},
          {"rotation_deg", rotation_deg},
          {"scale_min", scale_min},
          {"scale_max", scale_max},
          {"min_size_px", min_size_px},
          {"brightness_pct", brightness_pct},
          {"shift_px", shift_px},
          {"blur_min_px", blur_min_px},
          {"blur_max_px", blur_max_px},
          {"rho_jitter", rho_jitter}};
}

EotConfig EotConfig::from_json(const nlohmann::json& doc) {
  EotConfig c;
  try {
    c.samples_per_candidate = doc.value("samples_per_candidate", c.samples_per_candidate);
    c.perspective_deg = doc.value("perspective_deg", c.perspective_deg);
    c.rotation_deg = doc.value("rotation_deg", c.rotation_deg);
    c.scale_min = doc.value("scale_min", c.scale_min);
    c.scale_max = doc.value("scale_max", c.scale_max);
    c.min_size_px = doc.value("min_size_px", c.min_size_px);
    c.brightness_pct = doc.value("brightness_pct", c.brightness_pct);
    c.shift_px = doc.value("shift_px", c.shift_px);
    c.blur_min_px = doc.value("blur_min_px", c.blur_min_px);
    c.blur_max_px = doc.value("blur_max_px", c.blur_max_px);
    c.rho_jitter = doc.value("rho_jitter", c.rho_jitter);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed eot config: ") + e.what());
  }
  c.validate();
  return c;
}

TransformSample sample_transform(Rng& rng, const EotConfig& cfg) {
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  TransformSample s;
  s.tilt_x_deg = uniform(-cfg.perspective_deg, cfg.perspective_deg);
  s.tilt_y_deg = uniform(-cfg.perspective_deg, cfg.perspective_deg);
  s.rotation_deg = uniform(-cfg.rotation_deg, cfg.rotation_deg);
  s.scale = uniform(cfg.scale_min, cfg.scale_max);
  s.brightness = 1.0 + uniform(-cfg.brightness_pct, cfg.brightness_pct) / 100.0;
  s.dx = uniform(-cfg.shift_px, cfg.shift_px);
  s.dy = uniform(-cfg.shift_px, cfg.shift_px);
  s.blur_len = uniform(cfg.blur_min_px, cfg.blur_max_px);
  s.blur_angle = cfg.blur_max_px > 1.0 ? uniform(0.0, std::numbers::pi) : 0.0;
  if (!cfg.backgrounds.empty())
    s.background = std::uniform_int_distribution<int>(0, static_cast<int>(cfg.backgrounds.size()) - 1)(rng);
  s.rho_scale = 1.0 + uniform(-cfg.rho_jitter, cfg.rho_jitter);
  return s;
}

SignGeometry sign_geometry(const ObjectMask& mask) {
  const auto box = mask.bounding_box();
  if (!box) throw DataError("object mask is empty");
  SignGeometry g;
  g.cx = box->x + box->w / 2;
  g.cy = box->y + box->h / 2;
  const int w = mask.width(), h = mask.height();
  auto on = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && mask.get(x, y); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!on(x, y)) continue;
      if (on(x - 1, y) && on(x + 1, y) && on(x, y - 1) && on(x, y + 1)) continue;
      for (int cy = 0; cy <= 1; ++cy)
        for (int cx = 0; cx <= 1; ++cx) g.outline.emplace_back(x + cx, y + cy);
    }
  std::sort(g.outline.begin(), g.outline.end());
  g.outline.erase(std::unique(g.outline.begin(), g.outline.end()), g.outline.end());
  return g;
}

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 invert(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

// Tilted sign plane seen by a pinhole camera at distance f, composed with
// the in-plane rotation. Maps centered plane coordinates to centered image
// coordinates (before scaling).
struct Warp {
  Mat3 fwd{}, inv{};

  Warp(const TransformSample& s, double f) {
    const double ax = s.tilt_x_deg * std::numbers::pi / 180, ay = s.tilt_y_deg * std::numbers::pi / 180;
    const double cx = std::cos(ax), sx = std::sin(ax), cy = std::cos(ay), sy = std::sin(ay);
    // R = Ry * Rx
    const Mat3 r{{{cy, sy * sx, sy * cx}, {0, cx, -sx}, {-sy, cy * sx, cy * cx}}};
    const Mat3 h{{{f * r[0][0], f * r[0][1], 0}, {f * r[1][0], f * r[1][1], 0}, {r[2][0], r[2][1], f}}};
    const double a = s.rotation_deg * std::numbers::pi / 180, ca = std::cos(a), sa = std::sin(a);
    const Mat3 rot{{{ca, -sa, 0}, {sa, ca, 0}, {0, 0, 1}}};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0;
        for (int k = 0; k < 3; ++k) acc += rot[i][k] * h[k][j];
        fwd[i][j] = acc;
      }
    // Normalize so the sign center maps with unit weight.
    const double n = fwd[2][2];
    for (auto& row : fwd)
      for (double& v : row) v /= n;
    inv = invert(fwd);
  }

  static std::pair<double, double> apply(const Mat3& m, double x, double y) {
    const double w = m[2][0] * x + m[2][1] * y + m[2][2];
    return {(m[0][0] * x + m[0][1] * y + m[0][2]) / w, (m[1][0] * x + m[1][1] * y + m[1][2]) / w};
  }
};

bool is_identity_warp(const TransformSample& s) {
  return s.tilt_x_deg == 0 && s.tilt_y_deg == 0 && s.rotation_deg == 0;
}

// Bilinear sample with pixel centers at integer + 0.5; false outside the
// image footprint.
bool sample_bilinear(const RgbImage& img, double px, double py, double out[3]) {
  const int w = img.width(), h = img.height();
  if (px < 0 || py < 0 || px > w || py > h) return false;
  const double fx = std::clamp(px - 0.5, 0.0, double(w - 1));
  const double fy = std::clamp(py - 0.5, 0.0, double(h - 1));
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double tx = fx - x0, ty = fy - y0;
  for (int c = 0; c < 3; ++c) {
    const auto p = img.plane(c);
    const double top = p[y0 * w + x0] * (1 - tx) + p[y0 * w + x1] * tx;
    const double bot = p[y1 * w + x0] * (1 - tx) + p[y1 * w + x1] * tx;
    out[c] = top * (1 - ty) + bot * ty;
  }
  return true;
}

double sample_mask(const ObjectMask& m, double px, double py) {
  const int w = m.width(), h = m.height();
  if (px < 0 || py < 0 || px > w || py > h) return 0.0;
  const double fx = std::clamp(px - 0.5, 0.0, double(w - 1));
  const double fy = std::clamp(py - 0.5, 0.0, double(h - 1));
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double tx = fx - x0, ty = fy - y0;
  const double top = m.get(x0, y0) * (1 - tx) + m.get(x1, y0) * tx;
  const double bot = m.get(x0, y1) * (1 - tx) + m.get(x1, y1) * tx;
  return top * (1 - ty) + bot * ty;
}

}  // namespace

RgbImage scale_lightness(const RgbImage& img, double factor) {
  if (factor == 1.0) return img;
  LabImage lab = rgb_to_lab(img);
  for (double& l : lab.plane(0)) l = std::clamp(l * factor, 0.0, 100.0);
  return lab_to_rgb(lab);
}

RgbImage motion_blur(const RgbImage& img, double length, double angle) {
  if (length < 1.0) throw DataError("blur length must be >= 1");
  const int taps = std::max(1, static_cast<int>(std::lround(length)));
  if (taps == 1) return img;
  const double step = (length - 1.0) / (taps - 1);
  const double ux = std::cos(angle), uy = std::sin(angle);
  RgbImage out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double acc[3] = {0, 0, 0};
      for (int t = 0; t < taps; ++t) {
        const double off = -0.5 * (length - 1.0) + t * step;
        const double px = std::clamp(x + 0.5 + off * ux, 0.0, double(img.width()));
        const double py = std::clamp(y + 0.5 + off * uy, 0.0, double(img.height()));
        double v[3] = {0, 0, 0};
        sample_bilinear(img, px, py, v);
        for (int c = 0; c < 3; ++c) acc[c] += v[c];
      }
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = acc[c] / taps;
    }
  return out;
}

TransformedImage apply_transform(const RgbImage& img, const ObjectMask& mask, const SignGeometry& geom,
                                 const TransformSample& s, const RgbImage* background, int min_size_px) {
  if (mask.width() != img.width() || mask.height() != img.height())
    throw DataError("object mask does not match the image");
  const RgbImage& bg = background ? *background : img;
  if (!bg.same_shape(img)) throw DataError("background does not match the image size");
  if (geom.outline.empty()) throw DataError("sign geometry has no outline");

  const Warp warp(s, 2.0 * std::max(img.width(), img.height()));
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& [px, py] : geom.outline) {
    const auto [wx, wy] = Warp::apply(warp.fwd, px - geom.cx, py - geom.cy);
    x0 = std::min(x0, wx);
    y0 = std::min(y0, wy);
    x1 = std::max(x1, wx);
    y1 = std::max(y1, wy);
  }
  const double extent = std::min(x1 - x0, y1 - y0);
  double scale = s.scale;
  if (scale * extent < min_size_px) {
    scale = min_size_px / extent;
    while (scale * extent < min_size_px) scale = std::nextafter(scale, 1e300);
  }
  const double ox = geom.cx + s.dx, oy = geom.cy + s.dy;

  TransformedImage out{RgbImage(img.width(), img.height()),
                       BBox{ox + scale * x0, oy + scale * y0, scale * (x1 - x0), scale * (y1 - y0)}, scale};
  const bool identity = is_identity_warp(s) && scale == 1.0 && s.dx == 0 && s.dy == 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double sx = x + 0.5, sy = y + 0.5;
      if (!identity) {
        const auto [ux, uy] = Warp::apply(warp.inv, (sx - ox) / scale, (sy - oy) / scale);
        sx = ux + geom.cx;
        sy = uy + geom.cy;
      }
      const double alpha = sample_mask(mask, sx, sy);
      double sign[3] = {0, 0, 0};
      if (alpha > 0) sample_bilinear(img, sx, sy, sign);
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = alpha * sign[c] + (1 - alpha) * bg.at(x, y, c);
    }
  out.image = scale_lightness(out.image, s.brightness);
  out.image = motion_blur(out.image, s.blur_len, s.blur_angle);
  return out;
}

}  // namespace irpert
