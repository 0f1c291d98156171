#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "irpert/errors.hpp"

namespace irpert {

struct RgbTag {};
struct LabTag {};

// Three-channel image of doubles stored as three row-major planes.
// Channel order is (r, g, b) for RGB and (L, A, B) for CIELAB.
template <class Tag>
class PlanarImage {
 public:
  PlanarImage() = default;
  PlanarImage(int width, int height, double fill = 0.0) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw DataError("image dimensions must be positive");
    data_.assign(3 * pixel_count(), fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y, int c) { return data_[offset(x, y, c)]; }
  double at(int x, int y, int c) const { return data_[offset(x, y, c)]; }

  std::span<double> plane(int c) { return {data_.data() + c * pixel_count(), pixel_count()}; }
  std::span<const double> plane(int c) const {
    return {data_.data() + c * pixel_count(), pixel_count()};
  }

  std::span<double> raw() { return data_; }
  std::span<const double> raw() const { return data_; }

  bool same_shape(const PlanarImage& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const PlanarImage&, const PlanarImage&) = default;

 private:
  std::size_t offset(int x, int y, int c) const {
    return static_cast<std::size_t>(c) * pixel_count() +
           static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

using RgbImage = PlanarImage<RgbTag>;
using LabImage = PlanarImage<LabTag>;

// Axis-aligned pixel box, half-open: covers [x, x+w) x [y, y+h).
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;

  double area() const { return w * h; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

double iou(const BBox& a, const BBox& b);

struct ObjectTag {};
struct ProjectionTag {};
struct PlainTag {};

// Binary w x h pixel mask, row-major, one byte per pixel (0 or 1).
template <class Tag>
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, std::uint8_t fill = 0) : width_(width), height_(height) {
    if (width < 1 || height < 1) throw DataError("mask dimensions must be positive");
    bits_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0);
  }

  template <class OtherTag>
  explicit Mask(const Mask<OtherTag>& other)
      : width_(other.width()), height_(other.height()), bits_(other.bits().begin(), other.bits().end()) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return bits_.size(); }

  bool get(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }

  std::span<std::uint8_t> bits() { return bits_; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  // Tight box around the set pixels; nullopt when nothing is set.
  std::optional<BBox> bounding_box() const {
    int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        if (get(x, y)) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    if (x1 < 0) return std::nullopt;
    return BBox{double(x0), double(y0), double(x1 - x0 + 1), double(y1 - y0 + 1)};
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

using BinaryMask = Mask<PlainTag>;
// 1 = pixel lies on the target object.
using ObjectMask = Mask<ObjectTag>;
// 1 = infrared light is blocked at the pixel (a manypixel covers it).
using ProjectionMask = Mask<ProjectionTag>;

// Round to the nearest 8-bit level and clamp; the only quantization point.
inline std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 255.0);
  return static_cast<std::uint8_t>(c + 0.5);
}

// Returns a copy whose channel values are rounded to 8-bit levels.
RgbImage quantized(const RgbImage& img);

// Bilinear resampling onto a new grid (pixel-center aligned).
RgbImage resize_bilinear(const RgbImage& img, int width, int height);

// Copies the [x, x+w) x [y, y+h) window, clamping the box to the image.
RgbImage crop(const RgbImage& img, const BBox& box);

}  // namespace irpert
