#include "irpert/components.hpp"

namespace irpert {

std::vector<std::vector<int>> connected_components(const BinaryMask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw DataError("connectivity must be 4 or 8");
  const int w = mask.width(), h = mask.height();
  std::vector<int> label(mask.size(), -1);
  std::vector<std::vector<int>> out;
  std::vector<int> stack;
  for (int start = 0; start < static_cast<int>(mask.size()); ++start) {
    if (!mask.bits()[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(out.size());
    out.emplace_back();
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      out[id].push_back(p);
      const int px = p % w, py = p / w;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dx == 0 && dy == 0) || (connectivity == 4 && dx != 0 && dy != 0)) continue;
          const int nx = px + dx, ny = py + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int q = ny * w + nx;
          if (mask.bits()[q] && label[q] < 0) {
            label[q] = id;
            stack.push_back(q);
          }
        }
    }
  }
  return out;
}

}  // namespace irpert
