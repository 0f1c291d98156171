#include "irpert/harness/film.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "irpert/errors.hpp"
#include "irpert/png_io.hpp"

namespace irpert {

nlohmann::json FilmMeta::to_json() const {
  return {{"scenario", scenario}, {"seed", seed}, {"k", k}, {"l", l}, {"key", key}};
}

int film_side_px(double dpi, double size_mm) {
  if (!(dpi > 0) || !(size_mm > 0)) throw DataError("film dpi and size must be positive");
  const long n = std::lround(size_mm / 25.4 * dpi);
  if (n < 1 || n > 100000) throw DataError("film raster size out of range");
  return static_cast<int>(n);
}

namespace {

// Raster pixels [lo, hi] are the ones export_film fills from image pixel i.
int sample_px(int i, int n, int side) {
  const long lo = (static_cast<long>(i) * side + n - 1) / n;
  const long hi = (static_cast<long>(i + 1) * side + n - 1) / n - 1;
  return static_cast<int>((lo + std::max(lo, hi)) / 2);
}

// Marks narrower than this never touch a sampled pixel.
int mark_limit(int n, int side) { return std::min(sample_px(0, n, side), side - 1 - sample_px(n - 1, n, side)); }

}  // namespace

Film export_film(const ProjectionMask& projection, double dpi, double size_mm) {
  if (projection.width() < 1 || projection.height() < 1) throw DataError("empty projection mask");
  const int side = film_side_px(dpi, size_mm);
  const int w = projection.width(), h = projection.height();
  Film film{BinaryMask(side, side), dpi, size_mm, 0};
  for (int y = 0; y < side; ++y) {
    const int py = std::min(h - 1, static_cast<int>(static_cast<long>(y) * h / side));
    for (int x = 0; x < side; ++x) {
      const int px = std::min(w - 1, static_cast<int>(static_cast<long>(x) * w / side));
      film.raster.set(x, y, !projection.get(px, py));
    }
  }
  const int limit = std::min(mark_limit(w, side), mark_limit(h, side));
  film.mark_px = limit;
  if (limit < 1) return film;
  const int len = std::max(limit, side / 10);
  auto stroke = [&](int x0, int y0, int dx, int dy) {
    for (int a = 0; a < len; ++a)
      for (int t = 0; t < limit; ++t) {
        film.raster.set(x0 + dx * a, y0 + dy * t, false);
        film.raster.set(x0 + dx * t, y0 + dy * a, false);
      }
  };
  stroke(0, 0, 1, 1);
  stroke(side - 1, 0, -1, 1);
  stroke(0, side - 1, 1, -1);
  stroke(side - 1, side - 1, -1, -1);
  return film;
}

ProjectionMask rasterize_film(const BinaryMask& raster, int width, int height) {
  if (width < 1 || height < 1) throw DataError("rasterize size must be positive");
  ProjectionMask p(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      p.set(x, y, !raster.get(sample_px(x, width, raster.width()), sample_px(y, height, raster.height())));
  return p;
}

void write_film(const std::filesystem::path& stem, const Film& film, const ProjectionMask& projection,
                const FilmMeta& meta) {
  std::filesystem::path png = stem, side = stem;
  png += ".png";
  side += ".json";
  write_mask_png(png, film.raster);
  nlohmann::json doc = meta.to_json();
  doc["dpi"] = film.dpi;
  doc["size_mm"] = film.size_mm;
  doc["raster_px"] = film.raster.width();
  doc["image_width"] = projection.width();
  doc["image_height"] = projection.height();
  doc["mark_px"] = film.mark_px;
  doc["blocked_px"] = projection.count();
  std::ofstream out(side);
  if (!out) throw DataError("cannot write " + side.string());
  out << doc.dump(2) << '\n';
}

}  // namespace irpert
