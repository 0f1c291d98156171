#include "irpert/perturbation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <set>

#include "irpert/simd/kernels.hpp"

namespace irpert {

MpGrid::MpGrid(int side, int width, int height) : side_(side), width_(width), height_(height) {
  if (side < 1) throw DataError("manypixel side must be >= 1");
  if (width < 1 || height < 1) throw DataError("grid image dimensions must be positive");
  if (width % side != 0 || height % side != 0)
    throw DataError("manypixel side " + std::to_string(side) + " must divide the image size " +
                    std::to_string(width) + "x" + std::to_string(height));
}

MpSet::MpSet(const MpGrid& grid, std::vector<Cell> cells) {
  indices_.reserve(cells.size());
  for (Cell c : cells) {
    if (!grid.contains(c)) throw DataError("manypixel cell outside the reduced grid");
    indices_.push_back(grid.index(c));
  }
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
}

MpSet MpSet::from_indices(std::vector<int> indices) {
  MpSet s;
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  s.indices_ = std::move(indices);
  return s;
}

std::vector<Cell> MpSet::cells(const MpGrid& grid) const {
  std::vector<Cell> out;
  out.reserve(indices_.size());
  for (int i : indices_) out.push_back(grid.cell(i));
  return out;
}

bool MpSet::contains(int index) const { return std::binary_search(indices_.begin(), indices_.end(), index); }

std::vector<Cell> PixelBlock::pixels() const {
  std::vector<Cell> out;
  for (int x = x0; x < x1; ++x)
    for (int y = y0; y < y1; ++y) out.push_back({x, y});
  return out;
}

PixelBlock phi(Cell cell, const MpGrid& grid) {
  if (!grid.contains(cell)) throw DataError("manypixel cell outside the reduced grid");
  const int l = grid.side();
  return {cell.x * l, cell.y * l, cell.x * l + l, cell.y * l + l};
}

ProjectionMask model_perturbation(const MpSet& set, const ObjectMask& object, const MpGrid& grid) {
  if (object.width() != grid.width() || object.height() != grid.height())
    throw DataError("object mask does not match the manypixel grid");
  ProjectionMask p(grid.width(), grid.height());
  for (int index : set.indices()) {
    const PixelBlock b = phi(grid.cell(index), grid);
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x)
        if (object.get(x, y)) p.set(x, y);
  }
  return p;
}

RgbImage apply_ir(const RgbImage& img, const ProjectionMask& projection, const RhoTriple& rho) {
  if (img.width() != projection.width() || img.height() != projection.height())
    throw DataError("projection mask does not match the image");
  for (double r : rho)
    if (r < 0.0) throw DataError("rho must be non-negative");
  RgbImage out(img.width(), img.height());
  simd::active().ir_blend(img.plane(0).data(), img.plane(1).data(), img.plane(2).data(),
                          projection.bits().data(), img.pixel_count(), rho.data(), out.plane(0).data(),
                          out.plane(1).data(), out.plane(2).data());
  return out;
}

MpSet sample_mp_set(Rng& rng, int k, const MpGrid& grid) {
  const int n = grid.cell_count();
  if (k < 0 || k > n)
    throw DataError("cannot draw " + std::to_string(k) + " manypixels from " + std::to_string(n) + " cells");
  // Partial Fisher-Yates over cell indices.
  std::vector<int> pool(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return MpSet::from_indices(std::move(pool));
}

MpSet mutate_mp_set(Rng& rng, const MpSet& set, int n, const MpGrid& grid) {
  const int size = static_cast<int>(set.size());
  if (n < 0 || n > size) throw DataError("mutation count exceeds the set size");
  if (n == 0) return set;
  std::vector<int> kept = set.indices();
  std::vector<int> dropped;
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(kept.size()) - 1);
    const auto it = kept.begin() + pick(rng);
    dropped.push_back(*it);
    kept.erase(it);
  }
  std::set<int> members(kept.begin(), kept.end());
  std::uniform_int_distribution<int> draw(0, grid.cell_count() - 1);
  constexpr int kMaxAttempts = 100;
  for (int added = 0; added < n; ++added) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const int candidate = draw(rng);
      if (members.insert(candidate).second) {
        placed = true;
        break;
      }
    }
    if (!placed) {
      // Dense grid: fall back to restoring a dropped member.
      for (int d : dropped)
        if (members.insert(d).second) break;
    }
  }
  return MpSet::from_indices(std::vector<int>(members.begin(), members.end()));
}

namespace {

using Poly = std::vector<std::pair<double, double>>;

Poly unit_polygon(SignShape shape) {
  constexpr double pi = std::numbers::pi;
  Poly poly;
  switch (shape) {
    case SignShape::circle:
      break;
    case SignShape::octagon:
      for (int i = 0; i < 8; ++i) {
        const double a = pi / 8.0 + i * pi / 4.0;
        poly.emplace_back(std::cos(a), std::sin(a));
      }
      break;
    case SignShape::triangle:
      // Apex down, like a yield sign, vertically centered.
      for (int i = 0; i < 3; ++i) {
        const double a = pi / 2.0 + i * 2.0 * pi / 3.0;
        poly.emplace_back(std::cos(a), std::sin(a) - 0.25);
      }
      break;
    case SignShape::diamond:
      for (int i = 0; i < 4; ++i) {
        const double a = i * pi / 2.0;
        poly.emplace_back(std::cos(a), std::sin(a));
      }
      break;
  }
  return poly;
}

bool inside_polygon(const Poly& poly, double px, double py) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto [xi, yi] = poly[i];
    const auto [xj, yj] = poly[j];
    if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) in = !in;
  }
  return in;
}

}  // namespace

bool sign_shape_contains(SignShape shape, double u, double v) {
  if (shape == SignShape::circle) return u * u + v * v <= 1.0;
  static const std::array<Poly, 4> polys = {unit_polygon(SignShape::circle), unit_polygon(SignShape::octagon),
                                            unit_polygon(SignShape::triangle), unit_polygon(SignShape::diamond)};
  return inside_polygon(polys[static_cast<int>(shape)], u, v);
}

ObjectMask shape_mask(SignShape shape, int width, int height, double scale) {
  ObjectMask mask(width, height);
  const double cx = width / 2.0, cy = height / 2.0;
  const double radius = scale * std::min(width, height) / 2.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      mask.set(x, y, sign_shape_contains(shape, (x + 0.5 - cx) / radius, (y + 0.5 - cy) / radius));
  if (mask.count() == 0) throw DataError("sign shape too small for the frame");
  return mask;
}

}  // namespace irpert
