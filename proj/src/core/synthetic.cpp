#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>

#include "irpert/dataset.hpp"
#include "irpert/seed.hpp"

namespace irpert {

namespace {

struct Rgb {
  double r, g, b;
};

constexpr Rgb kRed{190, 32, 40};
constexpr Rgb kWhite{232, 232, 226};
constexpr Rgb kInk{40, 38, 44};
constexpr Rgb kYellow{238, 186, 24};

constexpr int kSpeedLimits[] = {20, 30, 50, 60, 80, 100};
constexpr int kNamedClasses = 10;

// Seven-segment glyphs, bit order a b c d e f g.
constexpr std::array<unsigned, 10> kSegments = {0x3f, 0x06, 0x5b, 0x4f, 0x66, 0x6d, 0x7d, 0x07, 0x7f, 0x6f};

bool in_rect(double u, double v, double u0, double v0, double u1, double v1) {
  return u >= u0 && u < u1 && v >= v0 && v < v1;
}

// Digit inside the box [u0, u0+w) x [v0, v0+h).
bool digit_contains(int digit, double u, double v, double u0, double v0, double w, double h) {
  const unsigned seg = kSegments[digit];
  const double t = 0.30 * w;
  const double x0 = u0, x1 = u0 + w, y0 = v0, y1 = v0 + h, ym = v0 + h / 2;
  const bool hits[7] = {
      in_rect(u, v, x0, y0, x1, y0 + t),                   // a
      in_rect(u, v, x1 - t, y0, x1, ym + t / 2),           // b
      in_rect(u, v, x1 - t, ym - t / 2, x1, y1),           // c
      in_rect(u, v, x0, y1 - t, x1, y1),                   // d
      in_rect(u, v, x0, ym - t / 2, x0 + t, y1),           // e
      in_rect(u, v, x0, y0, x0 + t, ym + t / 2),           // f
      in_rect(u, v, x0, ym - t / 2, x1, ym + t / 2),       // g
  };
  for (int i = 0; i < 7; ++i)
    if ((seg >> i & 1u) && hits[i]) return true;
  return false;
}

bool number_contains(int number, double u, double v) {
  const std::string text = std::to_string(number);
  const int n = static_cast<int>(text.size());
  const double h = 0.74, gap = 0.08;
  const double w = n == 3 ? 0.32 : 0.40;
  const double total = n * w + (n - 1) * gap;
  double u0 = -total / 2;
  for (char ch : text) {
    if (digit_contains(ch - '0', u, v, u0, -h / 2, w, h)) return true;
    u0 += w + gap;
  }
  return false;
}

Rgb hue_color(int index) {
  // Golden-angle hues at fixed chroma, kept away from the gray background.
  const double hue = std::fmod(index * 137.508, 360.0) * std::acos(-1.0) / 180.0;
  return {std::clamp(128 + 90 * std::cos(hue), 0.0, 255.0),
          std::clamp(128 + 90 * std::cos(hue - 2.094), 0.0, 255.0),
          std::clamp(128 + 90 * std::cos(hue + 2.094), 0.0, 255.0)};
}

struct Palette {
  Rgb red = kRed, white = kWhite, ink = kInk, yellow = kYellow, accent{};
};

// Sign color at normalized position (u, v); nullopt outside the sign.
std::optional<Rgb> sign_color(int cls, double u, double v, const Palette& pal) {
  const SignShape shape = synthetic_class_shape(cls);
  if (!sign_shape_contains(shape, u, v)) return std::nullopt;
  const double r = std::hypot(u, v);
  if (cls < 6) {
    if (r > 0.76) return pal.red;
    return number_contains(kSpeedLimits[cls], u, v) ? pal.ink : pal.white;
  }
  switch (cls) {
    case 6: {  // stop
      if (!sign_shape_contains(shape, u / 0.9, v / 0.9)) return pal.white;
      for (int i = 0; i < 4; ++i) {
        const double u0 = -0.66 + i * 0.34;
        if (in_rect(u, v, u0, -0.2, u0 + 0.26, 0.2) && !in_rect(u, v, u0 + 0.08, -0.1, u0 + 0.18, 0.1))
          return pal.white;
      }
      return pal.red;
    }
    case 7:  // yield
      return sign_shape_contains(shape, u / 0.55, (v + 0.25) / 0.55 - 0.25) ? pal.white : pal.red;
    case 8: {  // priority
      const double d = std::abs(u) + std::abs(v);
      if (d > 0.76) return pal.white;
      if (d > 0.68) return pal.ink;
      return pal.yellow;
    }
    case 9:  // no entry
      return in_rect(u, v, -0.66, -0.17, 0.66, 0.17) ? pal.white : pal.red;
    default: {
      // Generic catalog sign: colored field with a class-specific bar code.
      const int bits = cls - kNamedClasses + 1;
      for (int i = 0; i < 4; ++i)
        if ((bits >> i & 1) && in_rect(u, v, -0.6, -0.5 + i * 0.27, 0.6, -0.5 + i * 0.27 + 0.16)) return pal.white;
      return pal.accent;
    }
  }
}

Rgb jitter_color(Rgb c, Rng& rng, double amount, double brightness) {
  std::uniform_real_distribution<double> d(-amount, amount);
  return {std::clamp((c.r + d(rng)) * brightness, 0.0, 255.0), std::clamp((c.g + d(rng)) * brightness, 0.0, 255.0),
          std::clamp((c.b + d(rng)) * brightness, 0.0, 255.0)};
}

struct RenderJitter {
  double dx = 0, dy = 0, radius_scale = 1.0;
  Palette palette;
  Rgb background{120, 120, 120};
  double gradient = 0;
  double noise = 0;
};

RgbImage render(int cls, int res, const RenderJitter& j, Rng* rng) {
  RgbImage img(res, res);
  const double radius = 0.85 * res / 2.0 * j.radius_scale;
  const double cx = res / 2.0 + j.dx, cy = res / 2.0 + j.dy;
  constexpr int kSuper = 4;
  std::normal_distribution<double> noise(0.0, j.noise > 0 ? j.noise : 1.0);
  for (int y = 0; y < res; ++y) {
    const double ramp = j.gradient * ((y + 0.5) / res - 0.5);
    const Rgb bg{j.background.r + ramp, j.background.g + ramp, j.background.b + ramp};
    for (int x = 0; x < res; ++x) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper, py = y + (sy + 0.5) / kSuper;
          const auto c = sign_color(cls, (px - cx) / radius, (py - cy) / radius, j.palette);
          const Rgb& use = c ? *c : bg;
          acc[0] += use.r;
          acc[1] += use.g;
          acc[2] += use.b;
        }
      for (int c = 0; c < 3; ++c) {
        double v = acc[c] / (kSuper * kSuper);
        if (rng && j.noise > 0) v += noise(*rng);
        img.at(x, y, c) = quantize(v);
      }
    }
  }
  return img;
}

Palette class_palette(int cls) {
  Palette p;
  p.accent = hue_color(cls);
  return p;
}

}  // namespace

std::string synthetic_class_name(int index) {
  static const char* named[kNamedClasses] = {"speed_20", "speed_30", "speed_50", "speed_60", "speed_80",
                                             "speed_100", "stop", "yield", "priority", "no_entry"};
  if (index < 0) throw DataError("negative class index");
  if (index < kNamedClasses) return named[index];
  return "sign_" + std::to_string(index);
}

SignShape synthetic_class_shape(int index) {
  if (index < 6 || index == 9) return SignShape::circle;
  if (index == 6) return SignShape::octagon;
  if (index == 7) return SignShape::triangle;
  if (index == 8) return SignShape::diamond;
  return static_cast<SignShape>(index % 4);
}

RgbImage render_reference_sign(int class_index, int resolution) {
  return render(class_index, resolution, RenderJitter{.palette = class_palette(class_index)}, nullptr);
}

Dataset generate_synthetic_dataset(const SyntheticOptions& opt) {
  if (opt.n_classes < 2) throw DataError("synthetic dataset needs at least two classes");
  if (opt.samples_per_class < 1) throw DataError("samples_per_class must be positive");
  if (opt.resolution < 16) throw DataError("synthetic resolution must be at least 16 px");
  Dataset ds;
  ds.width = ds.height = opt.resolution;
  ds.seed = opt.seed;
  for (int c = 0; c < opt.n_classes; ++c) {
    ds.class_names.push_back(synthetic_class_name(c));
    ds.masks.push_back(shape_mask(synthetic_class_shape(c), opt.resolution, opt.resolution));
  }
  const double shift = 1.0 * opt.resolution / 64.0;
  for (int c = 0; c < opt.n_classes; ++c) {
    for (int i = 0; i < opt.samples_per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%d/%04d", c, i);
      Rng rng(derive_seed(opt.seed, name));
      std::uniform_real_distribution<double> pos(-shift, shift);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      RenderJitter j;
      j.dx = pos(rng);
      j.dy = pos(rng);
      j.radius_scale = 0.96 + 0.06 * unit(rng);
      const double brightness = 0.94 + 0.12 * unit(rng);
      const Palette base = class_palette(c);
      j.palette.red = jitter_color(base.red, rng, 6, brightness);
      j.palette.white = jitter_color(base.white, rng, 6, brightness);
      j.palette.ink = jitter_color(base.ink, rng, 6, brightness);
      j.palette.yellow = jitter_color(base.yellow, rng, 6, brightness);
      j.palette.accent = jitter_color(base.accent, rng, 6, brightness);
      const double gray = 105 + 30 * unit(rng);
      j.background = jitter_color({gray, gray, gray}, rng, 5, 1.0);
      j.gradient = -12 + 24 * unit(rng);
      j.noise = 2.5;
      ds.samples.push_back({name, c, render(c, opt.resolution, j, &rng), std::nullopt});
    }
  }
  return ds;
}

}  // namespace irpert
