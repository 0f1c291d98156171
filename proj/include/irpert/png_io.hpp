#pragma once

#include <filesystem>

#include "irpert/image.hpp"

namespace irpert {

// 8-bit RGB PNG. Grayscale and palette inputs are expanded; alpha is dropped.
RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& img);

// 1-bit grayscale PNG; white (nonzero) pixels are 1. Reading accepts any
// PNG and thresholds luminance at half range.
BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace irpert
