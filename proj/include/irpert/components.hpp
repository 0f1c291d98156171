#pragma once

#include <vector>

#include "irpert/image.hpp"

namespace irpert {

// Connected components of the set pixels (4- or 8-connectivity). Each
// component is the list of its row-major pixel indices, ordered by the
// first pixel encountered in a raster scan.
std::vector<std::vector<int>> connected_components(const BinaryMask& mask, int connectivity = 8);

}  // namespace irpert
