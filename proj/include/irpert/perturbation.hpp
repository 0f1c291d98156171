#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "irpert/colorspace.hpp"
#include "irpert/image.hpp"

namespace irpert {

using Rng = std::mt19937_64;

struct Cell {
  int x = 0;
  int y = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

// Square manypixels of side `l` tiling a w x h image.
class MpGrid {
 public:
  MpGrid(int side, int width, int height);

  int side() const { return side_; }
  int width() const { return width_; }
  int height() const { return height_; }
  int cols() const { return width_ / side_; }
  int rows() const { return height_ / side_; }
  int cell_count() const { return cols() * rows(); }

  bool contains(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < cols() && c.y < rows(); }
  int index(Cell c) const { return c.y * cols() + c.x; }
  Cell cell(int index) const { return {index % cols(), index / cols()}; }

 private:
  int side_, width_, height_;
};

// Duplicate-free set of manypixel cells, kept sorted by cell index.
class MpSet {
 public:
  MpSet() = default;
  MpSet(const MpGrid& grid, std::vector<Cell> cells);

  const std::vector<int>& indices() const { return indices_; }
  std::vector<Cell> cells(const MpGrid& grid) const;
  std::size_t size() const { return indices_.size(); }
  bool contains(int index) const;

  static MpSet from_indices(std::vector<int> indices);

  friend bool operator==(const MpSet&, const MpSet&) = default;

 private:
  std::vector<int> indices_;
};

struct PixelBlock {
  int x0, y0, x1, y1;  // half-open [x0, x1) x [y0, y1)

  std::vector<Cell> pixels() const;
};

// Pixel block covered by one manypixel.
PixelBlock phi(Cell cell, const MpGrid& grid);

// Union of the cells' pixel blocks intersected with the object mask.
ProjectionMask model_perturbation(const MpSet& set, const ObjectMask& object, const MpGrid& grid);

// x (.) P + IR(x) (.) (1 - P): blocked pixels keep their ambient color.
RgbImage apply_ir(const RgbImage& img, const ProjectionMask& projection, const RhoTriple& rho);

// k distinct cells drawn uniformly.
MpSet sample_mp_set(Rng& rng, int k, const MpGrid& grid);

// Drops `n` random members and draws replacements until the size is
// restored. A replacement that collides with the set is redrawn; after 100
// failed draws a dropped member is put back instead.
MpSet mutate_mp_set(Rng& rng, const MpSet& set, int n, const MpGrid& grid);

enum class SignShape { circle, octagon, triangle, diamond };

// Membership test in sign-normalized coordinates: (u, v) is the offset from
// the sign center divided by its radius, v pointing down.
bool sign_shape_contains(SignShape shape, double u, double v);

// Sign silhouette centered in a width x height frame; `scale` is the sign
// diameter as a fraction of the shorter side.
ObjectMask shape_mask(SignShape shape, int width, int height, double scale = 0.85);

}  // namespace irpert
