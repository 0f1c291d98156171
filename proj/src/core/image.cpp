#include "irpert/image.hpp"

#include <cmath>

namespace irpert {

double iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

RgbImage quantized(const RgbImage& img) {
  RgbImage out = img;
  for (double& v : out.raw()) v = quantize(v);
  return out;
}

RgbImage resize_bilinear(const RgbImage& img, int width, int height) {
  if (width == img.width() && height == img.height()) return img;
  RgbImage out(width, height);
  const double sx = double(img.width()) / width;
  const double sy = double(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(img.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(img.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1 - tx) + img.at(x1, y0, c) * tx;
        const double bot = img.at(x0, y1, c) * (1 - tx) + img.at(x1, y1, c) * tx;
        out.at(x, y, c) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

RgbImage crop(const RgbImage& img, const BBox& box) {
  const int x0 = std::clamp(static_cast<int>(std::floor(box.x)), 0, img.width() - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(box.y)), 0, img.height() - 1);
  const int x1 = std::clamp(static_cast<int>(std::ceil(box.x + box.w)), x0 + 1, img.width());
  const int y1 = std::clamp(static_cast<int>(std::ceil(box.y + box.h)), y0 + 1, img.height());
  RgbImage out(x1 - x0, y1 - y0);
  for (int c = 0; c < 3; ++c)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) out.at(x - x0, y - y0, c) = img.at(x, y, c);
  return out;
}

}  // namespace irpert
