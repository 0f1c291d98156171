#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "irpert/image.hpp"

namespace irpert {

struct FilmMeta {
  int scenario = 0;
  std::uint64_t seed = 0;
  int k = 0;
  int l = 0;
  std::string key;

  nlohmann::json to_json() const;
};

// Print raster: white (1) is clear film, black (0) blocks infrared.
struct Film {
  BinaryMask raster;
  double dpi = 0;
  double size_mm = 0;
  int mark_px = 0;  // registration mark stroke width
};

// Side length in printer pixels: round(size_mm / 25.4 * dpi).
int film_side_px(double dpi, double size_mm);

// Scales P onto a square raster and draws an L-shaped registration mark in
// every corner. Strokes stay clear of the raster pixels rasterize_film
// samples, so the roundtrip is exact whenever the raster is at least as large
// as P.
Film export_film(const ProjectionMask& projection, double dpi, double size_mm);

// Samples the middle of each image pixel's footprint on the raster.
ProjectionMask rasterize_film(const BinaryMask& raster, int width, int height);

// Writes <stem>.png (1-bit) and <stem>.json.
void write_film(const std::filesystem::path& stem, const Film& film, const ProjectionMask& projection,
                const FilmMeta& meta);

}  // namespace irpert
